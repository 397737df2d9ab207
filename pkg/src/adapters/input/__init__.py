"""
Input Adapters
Readers for models, problems and sample sets
"""
# Import handled at runtime
