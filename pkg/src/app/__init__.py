"""
Application Layer
"""
# Import handled at runtime to avoid circular dependencies
