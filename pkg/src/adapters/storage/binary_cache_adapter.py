"""
Binary Cache Adapter - Persistent reuse-cache store on the local file system
Implements CacheStorePort

Layout per key hash:
  <hash>.bin            16-byte header (8-byte magic, u32 version, u32 item
                        count, little endian) followed by little-endian f64 items
  <hash>.manifest.json  key, timings and the offset/shape of every item
"""
import json
import logging
import os
import struct
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.core.domain.errors import FormatError
from src.core.ports.cache_port import CacheStorePort

logger = logging.getLogger(__name__)

MAGIC = b"REUSEIGA"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sII")


class BinaryCacheAdapter(CacheStorePort):
    """
    One binary payload plus one JSON manifest per cache entry
    Writes go to temporary files first and are renamed into place
    """

    def __init__(self, cache_dir: str):
        self.cache_dir = Path(cache_dir).expanduser()

    def _paths(self, key_hash: str) -> Tuple[Path, Path]:
        return self.cache_dir / f"{key_hash}.bin", self.cache_dir / f"{key_hash}.manifest.json"

    def load(self, key_hash: str) -> Optional[Tuple[dict, Dict[str, np.ndarray]]]:
        bin_path, manifest_path = self._paths(key_hash)
        if not bin_path.exists() or not manifest_path.exists():
            return None
        with open(manifest_path, "r", encoding="utf-8") as f:
            try:
                manifest = json.load(f)
            except json.JSONDecodeError as e:
                raise FormatError(f"corrupt cache manifest: {e.msg}", str(manifest_path))
        payload = bin_path.read_bytes()
        if len(payload) < HEADER.size:
            raise FormatError("truncated cache file", str(bin_path))
        magic, version, count = HEADER.unpack_from(payload)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise FormatError(f"not a version {FORMAT_VERSION} cache file", str(bin_path))
        layout = manifest.get("items", [])
        if count != len(layout):
            raise FormatError(f"cache file holds {count} items, manifest lists {len(layout)}", str(bin_path))
        data = np.frombuffer(payload, dtype="<f8", offset=HEADER.size)
        items = {}
        for i, item in enumerate(layout):
            start = item["offset"]
            size = int(np.prod(item["shape"], dtype=np.int64))
            if start + size > len(data):
                raise FormatError(f"item {item['name']} runs past the end of the file", str(manifest_path),
                                  f"/items/{i}")
            items[item["name"]] = data[start:start + size].reshape(item["shape"]).astype(np.float64)
        logger.debug(f"Read cache entry {key_hash}: {len(items)} items, {len(payload)} bytes")
        return manifest, items

    def save(self, key_hash: str, manifest: dict, items: Mapping[str, np.ndarray]):
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        bin_path, manifest_path = self._paths(key_hash)
        layout = []
        chunks = []
        offset = 0
        for name in sorted(items):
            arr = np.ascontiguousarray(items[name], dtype="<f8")
            layout.append({"name": name, "offset": offset, "shape": list(arr.shape)})
            chunks.append(arr.tobytes())
            offset += arr.size
        doc = dict(manifest)
        doc["format_version"] = FORMAT_VERSION
        doc["items"] = layout
        tmp_bin = bin_path.with_suffix(".bin.tmp")
        tmp_manifest = manifest_path.with_suffix(".json.tmp")
        with open(tmp_bin, "wb") as f:
            f.write(HEADER.pack(MAGIC, FORMAT_VERSION, len(layout)))
            for chunk in chunks:
                f.write(chunk)
        with open(tmp_manifest, "w", encoding="utf-8") as f:
            json.dump(doc, f, sort_keys=True, indent=1)
        os.replace(tmp_bin, bin_path)
        os.replace(tmp_manifest, manifest_path)
        logger.info(f"Stored cache entry {key_hash} in {self.cache_dir} ({offset * 8 + HEADER.size} bytes)")

    def clear(self) -> int:
        if not self.cache_dir.exists():
            return 0
        removed = 0
        for p in sorted(self.cache_dir.iterdir()):
            if p.name.endswith((".bin", ".manifest.json", ".tmp")):
                p.unlink()
                removed += 1
        logger.info(f"Removed {removed} cache file(s) from {self.cache_dir}")
        return removed

    def list_keys(self) -> List[str]:
        if not self.cache_dir.exists():
            return []
        return sorted(p.name[:-len(".bin")] for p in self.cache_dir.glob("*.bin"))

    def get_store_info(self) -> dict:
        keys = self.list_keys()
        size = sum(p.stat().st_size for p in self.cache_dir.glob("*")) if self.cache_dir.exists() else 0
        return {"type": "binary", "cache_dir": str(self.cache_dir), "entries": len(keys), "bytes": size,
                "keys": keys}
