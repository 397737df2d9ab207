"""
Core Module - Domain and Ports
"""
