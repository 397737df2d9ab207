"""
Bernstein Algebra
Exact-coefficient arithmetic on univariate and trivariate Bernstein polynomials:
evaluation, product, integration, degree elevation, differentiation, subdivision,
and tabulated products for repeated use at fixed degrees.
Every other module carries its polynomials as BernsteinTensor.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Sequence, Tuple
import logging

import numpy as np
from scipy import signal

from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

MAX_BINOMIAL_N = 60
DOUBLE_INTEGER_LIMIT = 2 ** 53

Degrees = Tuple[int, int, int]


class BinomialTable:
    """
    Triangular table of C(n, k) for 0 <= k <= n <= max_n

    Values are generated once by Pascal's rule in exact integer arithmetic and
    stored as float64. Rows whose every entry survives the float conversion
    unchanged are flagged exact.
    """

    def __init__(self, max_n: int = MAX_BINOMIAL_N):
        if max_n < 0:
            raise DomainError(f"max_n must be nonnegative, got {max_n}")
        self.max_n = max_n
        rows = [[1]]
        for n in range(1, max_n + 1):
            prev = rows[-1]
            rows.append([1] + [prev[k - 1] + prev[k] for k in range(1, n)] + [1])
        self._integers = rows
        self._values = np.zeros((max_n + 1, max_n + 1), dtype=np.float64)
        self._exact = np.zeros(max_n + 1, dtype=bool)
        for n, row in enumerate(rows):
            self._values[n, :n + 1] = row
            self._exact[n] = all(c <= DOUBLE_INTEGER_LIMIT and int(float(c)) == c for c in row)
        self._values.setflags(write=False)
        self.exact_limit = int(np.argmin(self._exact)) - 1 if not self._exact.all() else max_n

    def binomial(self, n: int, k: int) -> float:
        if not (0 <= k <= n <= self.max_n):
            raise DomainError(f"binomial({n}, {k}) outside 0 <= k <= n <= {self.max_n}")
        return float(self._values[n, k])

    def exact_integer(self, n: int, k: int) -> int:
        if not (0 <= k <= n <= self.max_n):
            raise DomainError(f"binomial({n}, {k}) outside 0 <= k <= n <= {self.max_n}")
        return self._integers[n][k]

    def row(self, n: int) -> np.ndarray:
        if not (0 <= n <= self.max_n):
            raise DomainError(f"binomial row {n} outside 0 <= n <= {self.max_n}")
        return self._values[n, :n + 1]

    def is_exact(self, n: int) -> bool:
        return 0 <= n <= self.max_n and bool(self._exact[n])

    def require_exact(self, n: int, what: str = "degree"):
        """Raise ConfigurationError unless row n is stored exactly"""
        if n > self.max_n or not self._exact[n]:
            raise ConfigurationError(
                f"{what} needs binomials of order {n}, beyond the exact table "
                f"(exact up to {self.exact_limit}, max_n {self.max_n})"
            )


BINOMIALS = BinomialTable()


def binomial(n: int, k: int) -> float:
    """Exact C(n, k) from the shared table"""
    return BINOMIALS.binomial(n, k)


@lru_cache(maxsize=None)
def binomial_weights(degrees: Degrees) -> np.ndarray:
    """Outer product C(du,i) C(dv,j) C(dw,k) used to scale coefficients for products"""
    du, dv, dw = degrees
    w = np.einsum('i,j,k->ijk', BINOMIALS.row(du), BINOMIALS.row(dv), BINOMIALS.row(dw))
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class BernsteinTensor:
    """Trivariate Bernstein polynomial with per-direction degrees"""
    degrees: Degrees
    coeffs: np.ndarray

    def __post_init__(self):
        degrees = tuple(int(d) for d in self.degrees)
        if len(degrees) != 3 or min(degrees) < 0:
            raise DomainError(f"degrees must be three nonnegative integers, got {self.degrees}")
        coeffs = np.array(self.coeffs, dtype=np.float64)
        expected = tuple(d + 1 for d in degrees)
        if coeffs.shape != expected:
            raise DomainError(f"coefficient shape {coeffs.shape} does not match degrees {degrees}")
        coeffs.setflags(write=False)
        object.__setattr__(self, 'degrees', degrees)
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def constant(cls, value: float, degrees: Degrees = (0, 0, 0)) -> "BernsteinTensor":
        shape = tuple(d + 1 for d in degrees)
        return cls(degrees, np.full(shape, float(value)))

    @classmethod
    def zeros(cls, degrees: Degrees) -> "BernsteinTensor":
        return cls.constant(0.0, degrees)

    @classmethod
    def from_factors(cls, fu: Sequence[float], fv: Sequence[float], fw: Sequence[float]) -> "BernsteinTensor":
        """Separable tensor fu (x) fv (x) fw"""
        fu, fv, fw = (np.asarray(f, dtype=np.float64) for f in (fu, fv, fw))
        return cls((len(fu) - 1, len(fv) - 1, len(fw) - 1), np.einsum('i,j,k->ijk', fu, fv, fw))

    def scaled(self) -> np.ndarray:
        """Coefficients multiplied by their binomial weights"""
        return self.coeffs * binomial_weights(self.degrees)

    def __add__(self, other: "BernsteinTensor") -> "BernsteinTensor":
        a, b = _common(self, other)
        return BernsteinTensor(a.degrees, a.coeffs + b.coeffs)

    def __sub__(self, other: "BernsteinTensor") -> "BernsteinTensor":
        a, b = _common(self, other)
        return BernsteinTensor(a.degrees, a.coeffs - b.coeffs)

    def __neg__(self) -> "BernsteinTensor":
        return BernsteinTensor(self.degrees, -self.coeffs)

    def __mul__(self, scalar: float) -> "BernsteinTensor":
        if isinstance(scalar, BernsteinTensor):
            raise TypeError("use bernstein.product() for polynomial products")
        return BernsteinTensor(self.degrees, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def allclose(self, other: "BernsteinTensor", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        a, b = _common(self, other)
        return bool(np.allclose(a.coeffs, b.coeffs, atol=atol, rtol=rtol))

    def __repr__(self) -> str:
        return f"BernsteinTensor(degrees={self.degrees})"


def _common(p: BernsteinTensor, q: BernsteinTensor) -> Tuple[BernsteinTensor, BernsteinTensor]:
    target = tuple(max(a, b) for a, b in zip(p.degrees, q.degrees))
    return elevate(p, target), elevate(q, target)


def bernstein_basis(n: int, t) -> np.ndarray:
    """Values of B_0^n .. B_n^n at the points t, shape (len(t), n + 1)"""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    i = np.arange(n + 1)
    return BINOMIALS.row(n)[None, :] * t[:, None] ** i[None, :] * (1.0 - t[:, None]) ** (n - i)[None, :]


def bernstein_basis_derivative(n: int, t) -> np.ndarray:
    """First derivatives of B_0^n .. B_n^n at the points t, shape (len(t), n + 1)"""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if n == 0:
        return np.zeros((len(t), 1))
    lower = bernstein_basis(n - 1, t)
    out = np.zeros((len(t), n + 1))
    out[:, 1:] += n * lower
    out[:, :-1] -= n * lower
    return out


def _check_unit_cube(u: np.ndarray):
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise DomainError(f"parameter {u.tolist()} outside the unit cube")


def _de_casteljau(coeffs: np.ndarray, t: float) -> np.ndarray:
    """Collapse axis 0 of coeffs at parameter t"""
    c = coeffs
    for _ in range(coeffs.shape[0] - 1):
        c = (1.0 - t) * c[:-1] + t * c[1:]
    return c[0]


def evaluate(p: BernsteinTensor, u: Sequence[float]) -> float:
    """Value of p at u in [0,1]^3 by de Casteljau's algorithm"""
    u = np.asarray(u, dtype=np.float64).reshape(3)
    _check_unit_cube(u)
    c = p.coeffs
    for t in u:
        c = _de_casteljau(c, float(t))
    return float(c)


def evaluate_many(p: BernsteinTensor, points: np.ndarray) -> np.ndarray:
    """Values of p at an (N, 3) array of parameters"""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    _check_unit_cube(points)
    bu = bernstein_basis(p.degrees[0], points[:, 0])
    bv = bernstein_basis(p.degrees[1], points[:, 1])
    bw = bernstein_basis(p.degrees[2], points[:, 2])
    return np.einsum('ijk,ni,nj,nk->n', p.coeffs, bu, bv, bw)


def _order_key(p: BernsteinTensor):
    return p.degrees, p.coeffs.tobytes()


def product(p: BernsteinTensor, q: BernsteinTensor) -> BernsteinTensor:
    """
    Product of two trivariate Bernstein polynomials

    c_ijk = sum C(m1,i1)C(n1,i-i1) ... a_{i1 j1 k1} b_{i-i1, j-j1, k-k1} / (C(m1+n1,i) ...)
    realised as a direct convolution of binomially scaled coefficients.
    Operands are put in a canonical order first so that the result does not
    depend on argument order, bit for bit.
    """
    if _order_key(q) < _order_key(p):
        p, q = q, p
    degrees = tuple(a + b for a, b in zip(p.degrees, q.degrees))
    conv = signal.convolve(p.scaled(), q.scaled(), mode='full', method='direct')
    return BernsteinTensor(degrees, conv / binomial_weights(degrees))


def integrate(p: BernsteinTensor) -> float:
    """Exact integral over [0,1]^3: sum of coefficients over (du+1)(dv+1)(dw+1)"""
    return float(np.sum(p.coeffs)) / float(np.prod([d + 1 for d in p.degrees]))


@lru_cache(maxsize=None)
def elevation_matrix(n: int, r: int) -> np.ndarray:
    """Matrix raising univariate coefficients from degree n to n + r"""
    if r < 0:
        raise DomainError(f"cannot elevate degree {n} by {r}")
    m = np.zeros((n + r + 1, n + 1))
    for i in range(n + r + 1):
        for j in range(max(0, i - r), min(n, i) + 1):
            m[i, j] = binomial(n, j) * binomial(r, i - j) / binomial(n + r, i)
    m.setflags(write=False)
    return m


def apply_along_axis(coeffs: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    """Multiply coeffs by matrix along one tensor axis"""
    return np.moveaxis(np.tensordot(matrix, coeffs, axes=(1, axis)), 0, axis)


def elevate(p: BernsteinTensor, target_degrees: Sequence[int]) -> BernsteinTensor:
    """Raise p to target_degrees without changing it pointwise"""
    target = tuple(int(t) for t in target_degrees)
    if any(t < d for t, d in zip(target, p.degrees)):
        raise DomainError(f"target degrees {target} below current degrees {p.degrees}")
    if target == p.degrees:
        return p
    c = p.coeffs
    for axis, (d, t) in enumerate(zip(p.degrees, target)):
        if t > d:
            c = apply_along_axis(c, elevation_matrix(d, t - d), axis)
    return BernsteinTensor(target, c)


@lru_cache(maxsize=None)
def derivative_matrix(n: int) -> np.ndarray:
    """(n+1) x n matrix D with d/dt B_i^n = sum_j D[i, j] B_j^{n-1}"""
    if n == 0:
        m = np.zeros((1, 1))
    else:
        m = np.zeros((n + 1, n))
        for i in range(n + 1):
            if i > 0:
                m[i, i - 1] += n
            if i < n:
                m[i, i] -= n
    m.setflags(write=False)
    return m


def derivative(p: BernsteinTensor, axis: int) -> BernsteinTensor:
    """Partial derivative of p along one axis (degree drops by one, floor zero)"""
    n = p.degrees[axis]
    degrees = list(p.degrees)
    if n == 0:
        degrees[axis] = 0
        return BernsteinTensor.zeros(tuple(degrees))
    degrees[axis] = n - 1
    c = apply_along_axis(p.coeffs, derivative_matrix(n).T, axis)
    return BernsteinTensor(tuple(degrees), c)


@lru_cache(maxsize=None)
def subdivision_matrices(n: int, t: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """de Casteljau split of degree-n coefficients at t into [0,t] and [t,1] pieces"""
    left = np.zeros((n + 1, n + 1))
    right = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        left[i, :i + 1] = bernstein_basis(i, t)[0]
        right[i, i:] = bernstein_basis(n - i, t)[0]
    left.setflags(write=False)
    right.setflags(write=False)
    return left, right


def split(p: BernsteinTensor, axis: int, t: float = 0.5) -> Tuple[BernsteinTensor, BernsteinTensor]:
    """Re-expand p on the two halves of one direction"""
    left, right = subdivision_matrices(p.degrees[axis], t)
    return (BernsteinTensor(p.degrees, apply_along_axis(p.coeffs, left, axis)),
            BernsteinTensor(p.degrees, apply_along_axis(p.coeffs, right, axis)))


def sub_box(p: BernsteinTensor, corner: Sequence[int], levels: int = 1) -> BernsteinTensor:
    """Re-expand p on the dyadic sub-box with integer corner index at the given level"""
    c = p.coeffs
    for axis in range(3):
        c = apply_along_axis(c, dyadic_restriction(p.degrees[axis], int(corner[axis]), levels), axis)
    return BernsteinTensor(p.degrees, c)


@lru_cache(maxsize=None)
def dyadic_restriction(n: int, index: int, levels: int) -> np.ndarray:
    """Matrix restricting degree-n coefficients to [index/2^levels, (index+1)/2^levels]"""
    m = np.eye(n + 1)
    left, right = subdivision_matrices(n, 0.5)
    for bit in reversed(range(levels)):
        m = (right if (index >> bit) & 1 else left) @ m
    m.setflags(write=False)
    return m


def product_table(m: int, n: int) -> np.ndarray:
    """
    Univariate product of degrees m and n as a matrix

    T[k, i * (n + 1) + j] = C(m, i) C(n, j) / C(m + n, k) when i + j == k, so
    that T @ outer(a, b).ravel() gives the coefficients of a * b.
    """
    table = np.zeros((m + n + 1, m + 1, n + 1))
    for i in range(m + 1):
        for j in range(n + 1):
            table[i + j, i, j] = binomial(m, i) * binomial(n, j) / binomial(m + n, i + j)
    table = table.reshape(m + n + 1, (m + 1) * (n + 1))
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class ProductSkeleton:
    """
    Product tables for a fixed set of per-direction degree pairs

    tables[axis][(m, n)] is product_table(m, n) for that direction. A product
    through the skeleton is three matrix products on the outer product of
    the operands; no binomial is evaluated per call.
    """
    tables: Tuple[Dict[Tuple[int, int], np.ndarray], ...]

    @classmethod
    def build(cls, pairs: Sequence[Sequence[Tuple[int, int]]]) -> "ProductSkeleton":
        return cls(tuple({(int(m), int(n)): product_table(m, n) for m, n in axis_pairs}
                         for axis_pairs in pairs))

    def items(self) -> Dict[str, np.ndarray]:
        """Named arrays for the reuse cache"""
        return {f"product_{'uvw'[axis]}_{m}_{n}": t
                for axis, tables in enumerate(self.tables) for (m, n), t in sorted(tables.items())}

    @classmethod
    def from_items(cls, items: Dict[str, np.ndarray]) -> "ProductSkeleton":
        tables: Tuple[Dict[Tuple[int, int], np.ndarray], ...] = ({}, {}, {})
        for name, table in items.items():
            _, axis, m, n = name.split("_")
            tables["uvw".index(axis)][(int(m), int(n))] = table
        return cls(tables)

    def table(self, axis: int, m: int, n: int) -> np.ndarray:
        try:
            return self.tables[axis][(m, n)]
        except KeyError:
            raise DomainError(f"no product table for degrees ({m}, {n}) along axis {axis}")

    def multiply(self, p: BernsteinTensor, q: BernsteinTensor) -> BernsteinTensor:
        """Same polynomial as product(p, q)"""
        if _order_key(q) < _order_key(p):
            p, q = q, p
        return self.dot([p], [q])

    def dot(self, left: Sequence[BernsteinTensor], right: Sequence[BernsteinTensor],
            signs: Sequence[float] = ()) -> BernsteinTensor:
        """sum_k signs[k] left[k] right[k]; the left operands share degrees, and so do the right ones"""
        da, db = left[0].degrees, right[0].degrees
        signs = list(signs) or [1.0] * len(left)
        a = np.stack([t.coeffs * float(s) for t, s in zip(left, signs)])
        b = np.stack([t.coeffs for t in right])
        # (i1, j1, i2, j2, i3, j3) after the transpose
        outer = np.tensordot(a, b, axes=(0, 0)).transpose(0, 3, 1, 4, 2, 5)
        c = outer.reshape(tuple((x + 1) * (y + 1) for x, y in zip(da, db)))
        for axis in range(3):
            c = apply_along_axis(c, self.table(axis, da[axis], db[axis]), axis)
        return BernsteinTensor(tuple(x + y for x, y in zip(da, db)), c)
