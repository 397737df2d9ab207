"""
Cache Store Port - Interface for persistent reuse-cache stores
A store keeps the serialised items of one cache entry under its key hash
"""
from abc import ABC, abstractmethod
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np


class CacheStorePort(ABC):
    """
    Abstract base class for cache stores
    The in-memory ReuseCache talks to disk (or anything else) only through this
    """

    @abstractmethod
    def load(self, key_hash: str) -> Optional[Tuple[dict, Dict[str, np.ndarray]]]:
        """
        Return (manifest, items) for a key hash, or None if nothing is stored
        Raises OSError when the store is unreadable, FormatError when an entry is corrupt
        """
        pass

    @abstractmethod
    def save(self, key_hash: str, manifest: dict, items: Mapping[str, np.ndarray]):
        """Persist one entry; raises OSError when the store is not writable"""
        pass

    @abstractmethod
    def clear(self) -> int:
        """Remove every stored entry, returns the number of files removed"""
        pass

    @abstractmethod
    def list_keys(self) -> List[str]:
        """Key hashes currently stored"""
        pass

    @abstractmethod
    def get_store_info(self) -> dict:
        """Information about the store (location, entry count, bytes)"""
        pass
