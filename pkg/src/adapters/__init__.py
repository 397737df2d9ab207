"""
Adapters - Implementations of ports
These connect the solver core to files on disk
"""
from src.adapters.input.json_model_adapter import JsonModelAdapter
from src.adapters.output.csv_export_adapter import CsvExportAdapter
from src.adapters.output.vtk_export_adapter import VtkExportAdapter
from src.adapters.storage.binary_cache_adapter import BinaryCacheAdapter
from src.adapters.storage.memory_cache_adapter import MemoryCacheAdapter

__all__ = [
    'JsonModelAdapter',
    'CsvExportAdapter',
    'VtkExportAdapter',
    'BinaryCacheAdapter',
    'MemoryCacheAdapter',
]
