"""
Solution Export Port - Interface for writing solution fields
"""
from abc import ABC, abstractmethod
from typing import List

from ..domain.assembly import SolutionField


class SolutionExportPort(ABC):
    """
    Abstract base class for solution exporters (CSV, VTK, ...)
    """

    @abstractmethod
    def export(self, solution: SolutionField, path: str) -> List[str]:
        """
        Write the solution, returns the list of files written
        """
        pass

    @abstractmethod
    def get_export_info(self) -> dict:
        """Information about the exporter (format, sampling)"""
        pass
