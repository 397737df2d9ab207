"""
Domain Errors
Every failure raised by the core derives from IgaError so the application
layer can map it onto an exit code
"""
from typing import Iterable, List, Optional, Sequence


class IgaError(Exception):
    """Base class for all Reuse-IGA errors"""


class DomainError(IgaError, ValueError):
    """An argument lies outside the domain of an operation"""


class FormatError(IgaError, ValueError):
    """Malformed input: knot vectors, model, problem or sample files"""

    def __init__(self, message: str, path: Optional[str] = None, pointer: Optional[str] = None):
        self.path = path
        self.pointer = pointer
        location = ""
        if path:
            location = f"{path}"
            if pointer is not None:
                location += f"#{pointer}"
            location += ": "
        super().__init__(f"{location}{message}")


class ConfigurationError(IgaError):
    """Inconsistent setup: degrees beyond the binomial table, cache mismatch, bad interfaces"""


class CollocationError(ConfigurationError):
    """The boundary collocation matrix is singular for the chosen sites"""


class DegenerateGeometryError(IgaError, ArithmeticError):
    """The approximation system of an element cannot be solved"""

    def __init__(self, message: str, block: Optional[int] = None, element: Optional[Sequence[int]] = None):
        self.block = block
        self.element = tuple(element) if element is not None else None
        where = ""
        if block is not None or element is not None:
            where = f" (block {block}, element {self.element})"
        super().__init__(f"{message}{where}")


class SolverError(IgaError, ArithmeticError):
    """Iterative solve did not converge"""

    def __init__(self, message: str, residual_history: Iterable[float] = ()):
        self.residual_history: List[float] = list(residual_history)
        super().__init__(message)


class FitError(IgaError, ArithmeticError):
    """Elastic-map or B-spline solid fitting failed"""

    def __init__(self, message: str, offending_centers: Sequence[int] = (), null_space: int = 0):
        self.offending_centers = list(offending_centers)
        self.null_space = null_space
        super().__init__(message)


class ExpressionSyntaxError(FormatError):
    """Expression parse error with byte offset and the set of expected tokens"""

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = sorted(set(expected))
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class DegreeOverrunWarning(UserWarning):
    """An audited quantity exceeds its nominal bound"""
