"""
Ports - Interfaces for adapters
These define the contracts between the solver core and the outside world
"""
from .cache_port import CacheStorePort
from .export_port import SolutionExportPort
from .model_port import ModelSourcePort

__all__ = [
    'CacheStorePort',
    'ModelSourcePort',
    'SolutionExportPort',
]
