"""
Reuse Cache
Store of every geometry-independent precomputation, keyed by the structure of
a model: degrees, knot signatures, interface topology, approximation setup and
the boundary-collocation signature. Control points never enter the key, so
any model of a family with the same structure hits the same entry.
"""
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Dict, List, Mapping, Optional, Tuple
import hashlib
import json
import logging
import threading
import time

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sp_la

from .bernstein import Degrees, ProductSkeleton
from .element_kernel import PAIRS, PairTables
from .errors import CollocationError, ConfigurationError, FormatError
from .events import CacheEvent, DomainEvent, EventType
from .geometry_terms import BasisGradients, DCoefficientTable
from .polynomial_approx import ApproxDegrees, ApproxSystem
from .spline_volume import ExtractionOperator, MultiBlockVolume

if TYPE_CHECKING:
    from ..ports.cache_port import CacheStorePort

logger = logging.getLogger(__name__)

Builder = Callable[[], Dict[str, np.ndarray]]


@dataclass(frozen=True)
class CacheKey:
    """Structure of a model as far as the reusable data is concerned"""
    degrees: Degrees
    knot_signatures: Tuple
    approx_degrees: Degrees
    subdivisions: int = 0
    topology: Tuple = ()
    boundary_signature: str = ""

    @classmethod
    def for_model(cls, model: MultiBlockVolume, approx_degrees: ApproxDegrees, subdivisions: int = 0,
                  boundary_signature: str = "") -> "CacheKey":
        signatures = tuple(tuple(kv.signature() for kv in block.knot_vectors) for block in model.blocks)
        topology = tuple((tuple(i.a), tuple(i.b), i.orientation) for i in model.interfaces)
        return cls(tuple(model.degrees), signatures, approx_degrees.as_tuple(), int(subdivisions),
                   topology, boundary_signature)

    def as_dict(self) -> dict:
        return {
            "degrees": list(self.degrees),
            "knot_signatures": [[[p, [[k, m] for k, m in interior]] for p, interior in block]
                                for block in self.knot_signatures],
            "approx_degrees": list(self.approx_degrees),
            "subdivisions": self.subdivisions,
            "topology": [[list(a), list(b), o] for a, b, o in self.topology],
            "boundary_signature": self.boundary_signature,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CacheKey":
        """Inverse of as_dict, for keys read back from a store manifest"""
        try:
            signatures = tuple(
                tuple((int(p), tuple((float(k), int(m)) for k, m in interior)) for p, interior in block)
                for block in doc["knot_signatures"]
            )
            topology = tuple((tuple(a), tuple(b), o) for a, b, o in doc["topology"])
            return cls(tuple(doc["degrees"]), signatures, tuple(doc["approx_degrees"]),
                       int(doc["subdivisions"]), topology, doc["boundary_signature"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed cache key: {e}")

    def key_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:24]


def boundary_signature(sites: np.ndarray, boundary_dofs: np.ndarray) -> str:
    """Hash of the collocation sites and the boundary DOF set (never the boundary values)"""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(sites, dtype='<f8').tobytes())
    h.update(np.ascontiguousarray(boundary_dofs, dtype='<i8').tobytes())
    return h.hexdigest()[:24]


class CacheEntry:
    """
    Immutable bundle of named float64 arrays plus typed accessors

    The LU factors of the collocation matrix are the one thing built lazily:
    they are never serialised and are factorised at most once per entry.
    """

    def __init__(self, key: CacheKey, items: Mapping[str, np.ndarray],
                 timings: Optional[Mapping[str, float]] = None):
        self.key = key
        self.items: Dict[str, np.ndarray] = {}
        for name in sorted(items):
            arr = np.array(items[name], dtype=np.float64)
            arr.setflags(write=False)
            self.items[name] = arr
        self.timings: Dict[str, float] = dict(timings or {})
        self.factorizations = 0
        self._lu = None
        self._lu_lock = threading.Lock()

    @property
    def key_hash(self) -> str:
        return self.key.key_hash()

    def item(self, name: str) -> np.ndarray:
        try:
            return self.items[name]
        except KeyError:
            raise ConfigurationError(f"cache entry {self.key_hash} has no item '{name}'")

    def d_table(self) -> DCoefficientTable:
        return DCoefficientTable(self.key.degrees, tuple(self.item(f"d_table_{n}") for n in "uvw"))

    def gradients(self) -> BasisGradients:
        return BasisGradients(self.key.degrees, tuple(self.item(f"gradients_{n}") for n in "uvw"))

    def product_skeleton(self) -> ProductSkeleton:
        tables = {name: arr for name, arr in self.items.items() if name.startswith("product_")}
        if not tables:
            raise ConfigurationError(f"cache entry {self.key_hash} has no product tables")
        return ProductSkeleton.from_items(tables)

    def pair_tables(self) -> PairTables:
        return {(p, q): tuple(self.item(f"pair_{p}{q}_{n}") for n in "uvw") for p, q in PAIRS}

    def approx_system(self) -> ApproxSystem:
        items = {name[len("approx_"):]: arr for name, arr in self.items.items() if name.startswith("approx_")}
        numerator = tuple(int(x) for x in self.item("numerator_degrees"))
        return ApproxSystem.from_items(self.key.degrees, ApproxDegrees(*self.key.approx_degrees),
                                       numerator, items)

    def extraction(self, block: int) -> ExtractionOperator:
        ops = tuple(self.item(f"extraction_b{block}_{n}") for n in "uvw")
        spans = tuple(tuple(int(s) for s in self.item(f"spans_b{block}_{n}")) for n in "uvw")
        return ExtractionOperator(ops, spans)

    def block_dof_map(self, block: int) -> np.ndarray:
        return self.item(f"dof_map_b{block}").astype(np.int64)

    @property
    def n_dofs(self) -> int:
        return int(self.item("n_dofs")[0])

    @property
    def boundary_dofs(self) -> np.ndarray:
        return self.item("boundary_dofs").astype(np.int64)

    @property
    def collocation_sites(self) -> np.ndarray:
        """(n_boundary, 4): owner block and block parameters (u, v, w)"""
        return self.item("collocation_sites")

    def collocation_matrix(self) -> sparse.csc_matrix:
        n = len(self.boundary_dofs)
        return sparse.csc_matrix(
            (self.item("collocation_data"),
             (self.item("collocation_row").astype(np.int64), self.item("collocation_col").astype(np.int64))),
            shape=(n, n),
        )

    def collocation_lu(self):
        """splu of the collocation matrix, factorised once"""
        with self._lu_lock:
            if self._lu is None:
                m = self.collocation_matrix()
                try:
                    self._lu = sp_la.splu(m)
                except RuntimeError as e:
                    raise CollocationError(f"collocation matrix is singular: {e}")
                self.factorizations += 1
                logger.debug(f"Factorised collocation matrix {m.shape} (nnz {m.nnz})")
            return self._lu

    def stats(self, include_timings: bool = True) -> dict:
        """Per-item NNZ and bytes, with totals"""
        report = {"key_hash": self.key_hash, "items": {}, "total_nnz": 0, "total_bytes": 0}
        for name, arr in self.items.items():
            row = {"nnz": int(np.count_nonzero(arr)), "bytes": int(arr.nbytes), "shape": list(arr.shape)}
            if include_timings:
                row["build_seconds"] = float(self.timings.get(name, 0.0))
            report["items"][name] = row
            report["total_nnz"] += row["nnz"]
            report["total_bytes"] += row["bytes"]
        if include_timings:
            report["total_build_seconds"] = float(sum(self.timings.get(n, 0.0) for n in self.items))
        return report


def empty_stats() -> dict:
    return {"key_hash": "", "items": {}, "total_nnz": 0, "total_bytes": 0}


class ReuseCache:
    """
    In-memory map of entries, optionally backed by a persistent store

    get_or_build is atomic per key: concurrent callers with the same key wait
    for a single build and receive the same entry.
    """

    def __init__(self, store: Optional["CacheStorePort"] = None):
        self.store = store
        self.builder_calls = 0
        self.hits = 0
        self._entries: Dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        self._key_locks: Dict[str, threading.Lock] = {}
        self._event_listeners: List[Callable[[DomainEvent], None]] = []

    def register_event_listener(self, listener: Callable[[DomainEvent], None]):
        """Register a listener for cache events"""
        self._event_listeners.append(listener)

    def _emit_event(self, event: DomainEvent):
        for listener in self._event_listeners:
            try:
                listener(event)
            except Exception as e:
                logger.error(f"Error in event listener: {e}")

    def __contains__(self, key: CacheKey) -> bool:
        return key.key_hash() in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get_or_build(self, key: CacheKey, builders: Mapping[str, Builder]) -> CacheEntry:
        key_hash = key.key_hash()
        entry = self._memory_hit(key_hash)
        if entry is not None:
            return entry
        with self._lock:
            key_lock = self._key_locks.setdefault(key_hash, threading.Lock())

        with key_lock:
            entry = self._memory_hit(key_hash)
            if entry is not None:
                return entry
            entry = self._load(key, key_hash)
            if entry is None:
                entry = self._build(key, builders)
                self._save(entry)
                with self._lock:
                    self._entries[key_hash] = entry
                return entry
            with self._lock:
                self._entries[key_hash] = entry
                self.hits += 1
                calls = self.builder_calls
            self._emit_event(CacheEvent(EventType.CACHE_HIT, key_hash, calls, reason="store"))
            return entry

    def _memory_hit(self, key_hash: str) -> Optional[CacheEntry]:
        """Counted lookup; the event goes out after the lock is released"""
        with self._lock:
            entry = self._entries.get(key_hash)
            if entry is None:
                return None
            self.hits += 1
            calls = self.builder_calls
        self._emit_event(CacheEvent(EventType.CACHE_HIT, key_hash, calls))
        return entry

    def _build(self, key: CacheKey, builders: Mapping[str, Builder]) -> CacheEntry:
        key_hash = key.key_hash()
        logger.info(f"Building cache entry {key_hash} ({len(builders)} builders)")
        items: Dict[str, np.ndarray] = {}
        timings: Dict[str, float] = {}
        for group, builder in builders.items():
            start = time.perf_counter()
            produced = builder()
            elapsed = time.perf_counter() - start
            with self._lock:
                self.builder_calls += 1
            for name, arr in produced.items():
                if name in items:
                    raise ConfigurationError(f"builder '{group}' redefines cache item '{name}'")
                items[name] = arr
                timings[name] = elapsed / max(len(produced), 1)
        entry = CacheEntry(key, items, timings)
        self._emit_event(CacheEvent(EventType.CACHE_BUILT, key_hash, self.builder_calls))
        return entry

    def _load(self, key: CacheKey, key_hash: str) -> Optional[CacheEntry]:
        if self.store is None:
            return None
        try:
            stored = self.store.load(key_hash)
        except OSError as e:
            self._degrade(key_hash, f"load failed: {e}")
            return None
        except FormatError as e:
            logger.warning(f"Ignoring unreadable cache entry {key_hash}: {e}")
            return None
        if stored is None:
            return None
        manifest, items = stored
        if manifest.get("key") != key.as_dict():
            raise ConfigurationError(f"cache file {key_hash} belongs to a different key")
        logger.info(f"Loaded cache entry {key_hash} from store")
        return CacheEntry(key, items, manifest.get("timings", {}))

    def _save(self, entry: CacheEntry):
        if self.store is None:
            return
        try:
            self.store.save(entry.key_hash, {"key": entry.key.as_dict(), "timings": entry.timings}, entry.items)
        except OSError as e:
            self._degrade(entry.key_hash, f"save failed: {e}")

    def _degrade(self, key_hash: str, reason: str):
        logger.warning(f"Cache store unavailable ({reason}); continuing in memory")
        self.store = None
        self._emit_event(CacheEvent(EventType.CACHE_DEGRADED, key_hash, self.builder_calls, reason=reason))

    def entries(self) -> List[CacheEntry]:
        with self._lock:
            return [self._entries[k] for k in sorted(self._entries)]

    def clear(self) -> int:
        """Drop memory entries and, if present, the persistent store; returns files removed"""
        with self._lock:
            self._entries.clear()
            self._key_locks.clear()
        if self.store is None:
            return 0
        return self.store.clear()


def stats(entry: Optional[CacheEntry], include_timings: bool = True) -> dict:
    """Report for one entry; an absent entry reports zeros"""
    if entry is None:
        return empty_stats()
    return entry.stats(include_timings)
