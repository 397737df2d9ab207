"""
Memory Cache Adapter - CacheStorePort kept in a dictionary
Useful for tests and for runs that must not touch the disk
"""
import logging
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.core.ports.cache_port import CacheStorePort

logger = logging.getLogger(__name__)


class MemoryCacheAdapter(CacheStorePort):
    """Stores copies of manifests and items; fail_with simulates an unavailable store"""

    def __init__(self, fail_with: Optional[Exception] = None):
        self._entries: Dict[str, Tuple[dict, Dict[str, np.ndarray]]] = {}
        self.fail_with = fail_with
        self.loads = 0
        self.saves = 0

    def _check(self):
        if self.fail_with is not None:
            raise self.fail_with

    def load(self, key_hash: str) -> Optional[Tuple[dict, Dict[str, np.ndarray]]]:
        self._check()
        self.loads += 1
        stored = self._entries.get(key_hash)
        if stored is None:
            return None
        manifest, items = stored
        return dict(manifest), {k: v.copy() for k, v in items.items()}

    def save(self, key_hash: str, manifest: dict, items: Mapping[str, np.ndarray]):
        self._check()
        self.saves += 1
        self._entries[key_hash] = (dict(manifest), {k: np.array(v, dtype=np.float64) for k, v in items.items()})

    def clear(self) -> int:
        removed = len(self._entries)
        self._entries.clear()
        return removed

    def list_keys(self) -> List[str]:
        return sorted(self._entries)

    def get_store_info(self) -> dict:
        size = sum(v.nbytes for _, items in self._entries.values() for v in items.values())
        return {"type": "memory", "entries": len(self._entries), "bytes": size, "keys": self.list_keys()}
