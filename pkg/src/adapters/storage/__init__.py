"""
Storage adapters for the reuse cache
"""
from src.adapters.storage.binary_cache_adapter import BinaryCacheAdapter
from src.adapters.storage.memory_cache_adapter import MemoryCacheAdapter

__all__ = ['BinaryCacheAdapter', 'MemoryCacheAdapter']
