"""
Model Source Port - Interface for reading models, problems and sample sets
"""
from abc import ABC, abstractmethod
from ..domain.assembly import HeatProblem
from ..domain.csrbf import SampleSet
from ..domain.spline_volume import MultiBlockVolume


class ModelSourcePort(ABC):
    """
    Abstract base class for model sources
    Every malformed input must surface as a FormatError naming the path
    """

    @abstractmethod
    def read_model(self, path: str) -> MultiBlockVolume:
        """Read a multi-block B-spline volume"""
        pass

    @abstractmethod
    def read_problem(self, path: str) -> HeatProblem:
        """Read a heat-conduction problem (model, source, Dirichlet data)"""
        pass

    @abstractmethod
    def read_samples(self, path: str) -> dict:
        """
        Read a sample file for solid fitting
        Returns {"degrees", "elements", "knot_vectors", "blocks": List[SampleSet]}
        """
        pass

    @abstractmethod
    def write_model(self, model: MultiBlockVolume, path: str):
        """Write a model in the same format read_model accepts"""
        pass

