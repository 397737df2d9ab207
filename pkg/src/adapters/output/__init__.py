"""
Output Adapters
Solution exporters
"""
# Import handled at runtime
