"""
Core Domain - Quadrature-free IGA heat conduction
This is the center of the hexagonal architecture: spline volumes, the
Bernstein algebra, geometry terms, polynomial approximation, element
kernels, the reuse cache, assembly and the CSRBF front end
"""
from .assembly import HeatAssembler, HeatProblem, GlobalSystem, SolutionField, l2_relative_error
from .element_kernel import EntryMode
from .errors import (
    IgaError,
    DomainError,
    FormatError,
    ConfigurationError,
    CollocationError,
    DegenerateGeometryError,
    SolverError,
    FitError,
    ExpressionSyntaxError,
    DegreeOverrunWarning,
)
from .events import DomainEvent, EventType, ElementWarningEvent, CacheEvent, SolveEvent
from .expression import Expression, parse
from .reuse_cache import CacheKey, ReuseCache
from .spline_volume import BSplineVolume, Interface, KnotVector, MultiBlockVolume

__all__ = [
    'HeatAssembler',
    'HeatProblem',
    'GlobalSystem',
    'SolutionField',
    'l2_relative_error',
    'EntryMode',
    'IgaError',
    'DomainError',
    'FormatError',
    'ConfigurationError',
    'CollocationError',
    'DegenerateGeometryError',
    'SolverError',
    'FitError',
    'ExpressionSyntaxError',
    'DegreeOverrunWarning',
    'DomainEvent',
    'EventType',
    'ElementWarningEvent',
    'CacheEvent',
    'SolveEvent',
    'Expression',
    'parse',
    'CacheKey',
    'ReuseCache',
    'BSplineVolume',
    'Interface',
    'KnotVector',
    'MultiBlockVolume',
]
