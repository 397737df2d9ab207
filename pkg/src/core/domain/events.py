"""
Domain Events for the IGA solver
These represent things that happen while assembling and solving
"""
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Optional, Tuple


class EventType(Enum):
    """Types of events in the system"""
    ELEMENT_DEGENERATE = "element_degenerate"
    APPROXIMATION_ILL_CONDITIONED = "approximation_ill_conditioned"
    CACHE_HIT = "cache_hit"
    CACHE_BUILT = "cache_built"
    CACHE_DEGRADED = "cache_degraded"
    COLLOCATION_FACTORIZED = "collocation_factorized"
    SOLVE_FINISHED = "solve_finished"


@dataclass
class DomainEvent:
    """Base class for all domain events"""
    event_type: EventType
    timestamp: datetime
    data: dict

    def __post_init__(self):
        if self.timestamp is None:
            self.timestamp = datetime.now()


@dataclass
class ElementWarningEvent(DomainEvent):
    """Raised for an element whose geometry or approximation system looks unhealthy"""
    block: int
    element: Tuple[int, int, int]
    detail: str

    def __init__(self, event_type: EventType, block: int, element: Tuple[int, int, int], detail: str):
        super().__init__(
            event_type=event_type,
            timestamp=datetime.now(),
            data={"block": block, "element": list(element), "detail": detail}
        )
        self.block = block
        self.element = tuple(element)
        self.detail = detail


@dataclass
class CacheEvent(DomainEvent):
    """Cache lookups, builds and degradations"""
    key_hash: str
    builder_calls: int

    def __init__(self, event_type: EventType, key_hash: str, builder_calls: int = 0,
                 reason: Optional[str] = None):
        super().__init__(
            event_type=event_type,
            timestamp=datetime.now(),
            data={"key_hash": key_hash, "builder_calls": builder_calls, "reason": reason}
        )
        self.key_hash = key_hash
        self.builder_calls = builder_calls


@dataclass
class SolveEvent(DomainEvent):
    """Summary of a finished linear solve"""
    dofs: int
    method: str
    iterations: int
    residual: float

    def __init__(self, dofs: int, method: str, iterations: int, residual: float):
        super().__init__(
            event_type=EventType.SOLVE_FINISHED,
            timestamp=datetime.now(),
            data={"dofs": dofs, "method": method, "iterations": iterations, "residual": residual}
        )
        self.dofs = dofs
        self.method = method
        self.iterations = iterations
        self.residual = residual
