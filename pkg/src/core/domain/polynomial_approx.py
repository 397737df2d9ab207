"""
Polynomial Approximation
Weighted least-squares approximation of the rational integrand F = F1 / J by
a polynomial Bernstein tensor G, with J itself as the weight, and exact
integration of G.

The normal equations read (L E) G = sigma Q F. L, Q and sigma depend on the
degrees only and are stored as per-direction factors; E is linear in the
Jacobian coefficients and is the one geometry-dependent part.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.stats import qmc

from .bernstein import (
    BINOMIALS, BernsteinTensor, Degrees, apply_along_axis, dyadic_restriction, elevate,
    evaluate_many, sub_box,
)
from .errors import ConfigurationError, DegenerateGeometryError, DomainError
from .geometry_terms import EntryNumerator, JacobianExpansion, jacobian_degrees, numerator_degrees

logger = logging.getLogger(__name__)

RCOND_WARNING = 1e-12
RESIDUAL_SAMPLES = 343


@dataclass(frozen=True)
class ApproxDegrees:
    alpha: int
    beta: int
    gamma: int

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise DomainError(f"approximation degrees must be nonnegative, got {self.as_tuple()}")

    @classmethod
    def default(cls, degrees: Degrees) -> "ApproxDegrees":
        """3p - 3 per direction"""
        return cls(*(3 * p - 3 for p in degrees))

    def elevated(self, bump: Sequence[int]) -> "ApproxDegrees":
        if isinstance(bump, int):
            bump = (bump, bump, bump)
        return ApproxDegrees(*(a + int(b) for a, b in zip(self.as_tuple(), bump)))

    def as_tuple(self) -> Degrees:
        return (self.alpha, self.beta, self.gamma)

    @property
    def n_unknowns(self) -> int:
        return int(np.prod([a + 1 for a in self.as_tuple()]))


def _kernel_factor(p: int, a: int) -> np.ndarray:
    """K[i, g, r] = C(3p-1, r) C(a, g) / C(2a+3p-1, g+r+i)"""
    jd = 3 * p - 1
    top = 2 * a + 3 * p - 1
    k = np.zeros((a + 1, a + 1, jd + 1))
    for i in range(a + 1):
        for g in range(a + 1):
            for r in range(jd + 1):
                k[i, g, r] = BINOMIALS.binomial(jd, r) * BINOMIALS.binomial(a, g) / BINOMIALS.binomial(top, g + r + i)
    k.setflags(write=False)
    return k


def _q_factor(a: int, n: int) -> np.ndarray:
    """Q[i, p] = C(n, p) / C(a+n, p+i)"""
    q = np.zeros((a + 1, n + 1))
    for i in range(a + 1):
        for p in range(n + 1):
            q[i, p] = BINOMIALS.binomial(n, p) / BINOMIALS.binomial(a + n, p + i)
    q.setflags(write=False)
    return q


def _l_factor(p: int, a: int) -> np.ndarray:
    """L[i, c] = 1 / C(2a+3p-1, c+i) over the H index c in [0, a+3p-1]"""
    top = 2 * a + 3 * p - 1
    m = np.array([[1.0 / BINOMIALS.binomial(top, c + i) for c in range(a + 3 * p)] for i in range(a + 1)])
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class ApproxSystem:
    """Degree-only part of the approximation system"""
    spline_degrees: Degrees
    approx_degrees: ApproxDegrees
    numerator_degrees: Degrees
    kernels: Tuple[np.ndarray, np.ndarray, np.ndarray]
    q_factors: Tuple[np.ndarray, np.ndarray, np.ndarray]
    l_factors: Tuple[np.ndarray, np.ndarray, np.ndarray]
    sigma: float

    @property
    def n_unknowns(self) -> int:
        return self.approx_degrees.n_unknowns

    @property
    def n_numerator(self) -> int:
        return int(np.prod([n + 1 for n in self.numerator_degrees]))

    @property
    def n_h(self) -> int:
        return int(np.prod([a + 3 * p for a, p in zip(self.approx_degrees.as_tuple(), self.spline_degrees)]))

    def system_matrix(self, jac: JacobianExpansion) -> np.ndarray:
        """A = L E for one Jacobian, (alpha+1)(beta+1)(gamma+1) square"""
        if jac.tensor.degrees != jacobian_degrees(self.spline_degrees):
            raise DomainError(f"Jacobian degrees {jac.tensor.degrees} do not match {self.spline_degrees}")
        a6 = np.einsum('rst,xar,ybs,zct->xyzabc', jac.tensor.coeffs, *self.kernels, optimize=True)
        n = self.n_unknowns
        return a6.reshape(n, n)

    def rhs(self, numerator: np.ndarray) -> np.ndarray:
        """sigma Q F as a flat vector"""
        c = numerator
        for axis in range(3):
            c = apply_along_axis(c, self.q_factors[axis], axis)
        return self.sigma * c.ravel()

    def rhs_adjoint(self, y: np.ndarray) -> np.ndarray:
        """sigma Q^T y, shaped over the numerator index space"""
        c = y.reshape(tuple(a + 1 for a in self.approx_degrees.as_tuple()))
        for axis in range(3):
            c = apply_along_axis(c, self.q_factors[axis].T, axis)
        return self.sigma * c

    def l_dense(self) -> np.ndarray:
        lu, lv, lw = self.l_factors
        return np.kron(lu, np.kron(lv, lw))

    def q_dense(self) -> np.ndarray:
        qu, qv, qw = self.q_factors
        return np.kron(qu, np.kron(qv, qw))

    def items(self) -> Dict[str, np.ndarray]:
        """Named arrays for the reuse cache"""
        out = {}
        for d, name in enumerate("uvw"):
            out[f"kernel_{name}"] = self.kernels[d]
            out[f"q_{name}"] = self.q_factors[d]
            out[f"l_{name}"] = self.l_factors[d]
        out["sigma"] = np.array([self.sigma])
        return out

    @classmethod
    def from_items(cls, spline_degrees: Degrees, approx_degrees: ApproxDegrees, numerator: Degrees,
                   items: Dict[str, np.ndarray]) -> "ApproxSystem":
        return cls(
            tuple(spline_degrees), approx_degrees, tuple(numerator),
            tuple(items[f"kernel_{n}"] for n in "uvw"),
            tuple(items[f"q_{n}"] for n in "uvw"),
            tuple(items[f"l_{n}"] for n in "uvw"),
            float(items["sigma"][0]),
        )

    def prepare(self, jac: JacobianExpansion, subdivisions: int = 0,
                block: Optional[int] = None, element: Optional[Tuple[int, int, int]] = None
                ) -> "ElementApproximation":
        """Factor A = L E once per (sub-)element; shared by every basis pair"""
        if subdivisions < 0:
            raise DomainError(f"subdivisions must be >= 0, got {subdivisions}")
        pieces = []
        count = 2 ** subdivisions
        for corner in np.ndindex(count, count, count):
            piece = jac if subdivisions == 0 else JacobianExpansion(sub_box(jac.tensor, corner, subdivisions))
            a = self.system_matrix(piece)
            pieces.append(_factor(a, corner, block, element))
        return ElementApproximation(self, jac, subdivisions, tuple(pieces))


def build_reusable(alpha: int, beta: int, gamma: int, l: int, m: int, n: int,
                   numerator: Optional[Degrees] = None) -> ApproxSystem:
    """L, Q and sigma for one combination of approximation and spline degrees"""
    approx = ApproxDegrees(alpha, beta, gamma)
    spline = (l, m, n)
    if min(spline) < 1:
        raise DomainError(f"spline degrees must be >= 1, got {spline}")
    num = tuple(numerator) if numerator is not None else numerator_degrees(spline)
    for a, p, nn in zip(approx.as_tuple(), spline, num):
        BINOMIALS.require_exact(2 * a + 3 * p - 1, "approximation system")
        BINOMIALS.require_exact(a + nn, "approximation system")
    sigma = 1.0
    for a, p, nn in zip(approx.as_tuple(), spline, num):
        sigma *= (2 * a + 3 * p) / (a + nn + 1)
    kernels = tuple(_kernel_factor(p, a) for a, p in zip(approx.as_tuple(), spline))
    q_factors = tuple(_q_factor(a, nn) for a, nn in zip(approx.as_tuple(), num))
    l_factors = tuple(_l_factor(p, a) for a, p in zip(approx.as_tuple(), spline))
    logger.debug(f"Built approximation system spline={spline} approx={approx.as_tuple()} "
                 f"numerator={num} sigma={sigma:.6g}")
    return ApproxSystem(spline, approx, num, kernels, q_factors, l_factors, sigma)


def build_E(jac: JacobianExpansion, system: ApproxSystem) -> np.ndarray:
    """Dense E over (H index, unknown index): E[(a),(g)] = sum_r C(3l-1,r) C(alpha,g) J_r [a = r + g]"""
    shape_h = tuple(a + 3 * p for a, p in zip(system.approx_degrees.as_tuple(), system.spline_degrees))
    shape_g = tuple(a + 1 for a in system.approx_degrees.as_tuple())
    jd = jac.tensor.degrees
    weights = jac.tensor.coeffs * np.einsum(
        'i,j,k->ijk', BINOMIALS.row(jd[0]), BINOMIALS.row(jd[1]), BINOMIALS.row(jd[2]))
    gw = np.einsum('i,j,k->ijk', *(BINOMIALS.row(a) for a in system.approx_degrees.as_tuple()))
    e = np.zeros(shape_h + shape_g)
    for g in np.ndindex(*shape_g):
        e[g[0]:g[0] + jd[0] + 1, g[1]:g[1] + jd[1] + 1, g[2]:g[2] + jd[2] + 1, g[0], g[1], g[2]] = weights * gw[g]
    return e.reshape(int(np.prod(shape_h)), int(np.prod(shape_g)))


@dataclass(frozen=True, eq=False)
class _Piece:
    corner: Tuple[int, int, int]
    lu: np.ndarray
    piv: np.ndarray
    rcond: float


def _factor(a: np.ndarray, corner, block, element) -> _Piece:
    if not np.all(np.isfinite(a)):
        raise DegenerateGeometryError("approximation system has non-finite entries", block, element)
    lu, piv = linalg.lu_factor(a, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise DegenerateGeometryError("approximation system L.E is singular", block, element)
    anorm = float(np.linalg.norm(a, 1))
    rcond, info = lapack.dgecon(lu, anorm, norm='1')
    return _Piece(tuple(int(c) for c in corner), lu, piv, float(rcond))


@dataclass(frozen=True, eq=False)
class Approximant:
    """G over one (sub-)element with a sampled relative deviation from F"""
    G: BernsteinTensor
    residual_estimate: float = 0.0
    volume_fraction: float = 1.0


def _residual(num: BernsteinTensor, jac: BernsteinTensor, g: BernsteinTensor) -> float:
    points = qmc.Halton(d=3, scramble=False).random(RESIDUAL_SAMPLES)
    j = evaluate_many(jac, points)
    ok = np.abs(j) > 1e-300
    if not np.any(ok):
        return 0.0
    f = evaluate_many(num, points[ok]) / j[ok]
    scale = float(np.max(np.abs(f)))
    if scale == 0.0:
        return float(np.max(np.abs(evaluate_many(g, points[ok]))))
    return float(np.max(np.abs(f - evaluate_many(g, points[ok]))) / scale)


@dataclass(frozen=True, eq=False)
class ElementApproximation:
    """Factored approximation systems of one element (one per dyadic sub-box)"""
    system: ApproxSystem
    jacobian: JacobianExpansion
    subdivisions: int
    pieces: Tuple[_Piece, ...]
    _weights: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def min_rcond(self) -> float:
        return min(p.rcond for p in self.pieces)

    @property
    def ill_conditioned(self) -> bool:
        return self.min_rcond < RCOND_WARNING

    def _numerator(self, num) -> BernsteinTensor:
        t = num.tensor if isinstance(num, EntryNumerator) else num
        if any(a > b for a, b in zip(t.degrees, self.system.numerator_degrees)):
            raise DomainError(f"numerator degrees {t.degrees} exceed {self.system.numerator_degrees}")
        return elevate(t, self.system.numerator_degrees)

    def approximate(self, num, with_residual: bool = True) -> List[Approximant]:
        """One Approximant per sub-box, in C order over the sub-box corners"""
        f = self._numerator(num)
        shape = tuple(a + 1 for a in self.system.approx_degrees.as_tuple())
        fraction = 1.0 / 8 ** self.subdivisions
        out = []
        for piece in self.pieces:
            if self.subdivisions:
                fp = sub_box(f, piece.corner, self.subdivisions)
                jp = sub_box(self.jacobian.tensor, piece.corner, self.subdivisions)
            else:
                fp, jp = f, self.jacobian.tensor
            g = linalg.lu_solve((piece.lu, piece.piv), self.system.rhs(fp.coeffs), check_finite=False)
            gt = BernsteinTensor(self.system.approx_degrees.as_tuple(), g.reshape(shape))
            residual = _residual(fp, jp, gt) if with_residual else 0.0
            out.append(Approximant(gt, residual, fraction))
        return out

    def integrate(self, num) -> float:
        """Approximate integral of num / J over the element"""
        return sum(integrate_entry(a) for a in self.approximate(num, with_residual=False))

    def weights(self) -> np.ndarray:
        """
        omega over numerator coefficients with integrate(F) == sum(omega * F)

        Computed by one transposed solve per sub-box.
        """
        if self._weights:
            return self._weights[0]
        n = self.system.n_unknowns
        ones = np.full(n, 1.0 / n)
        total = np.zeros(tuple(d + 1 for d in self.system.numerator_degrees))
        fraction = 1.0 / 8 ** self.subdivisions
        for piece in self.pieces:
            y = linalg.lu_solve((piece.lu, piece.piv), ones, trans=1, check_finite=False)
            w = self.system.rhs_adjoint(y)
            if self.subdivisions:
                for axis in range(3):
                    r = dyadic_restriction(self.system.numerator_degrees[axis], piece.corner[axis],
                                           self.subdivisions)
                    w = apply_along_axis(w, r.T, axis)
            total = total + fraction * w
        total.setflags(write=False)
        self._weights.append(total)
        return total


def approximate(num: EntryNumerator, jac: JacobianExpansion, system: ApproxSystem) -> Approximant:
    """Single-piece approximation; see ElementApproximation for reuse across pairs"""
    return system.prepare(jac).approximate(num)[0]


def integrate_entry(g: Approximant) -> float:
    """Exact integral of G over its (sub-)element, scaled to the parent element"""
    return g.volume_fraction * float(np.sum(g.G.coeffs)) / float(g.G.coeffs.size)


class RefinementStrategy(Enum):
    PIECEWISE = "piecewise"
    DEGREE_ELEVATE = "degree-elevate"
    COMBINED = "combined"


@dataclass(frozen=True)
class RefinementPlan:
    degrees: ApproxDegrees
    subdivisions: int = 0


def refine_approximation(strategy, plan: RefinementPlan, bump: Sequence[int] = (1, 1, 1)) -> RefinementPlan:
    """Next plan: split into 2x2x2 sub-boxes, raise (alpha, beta, gamma), or both"""
    try:
        strategy = RefinementStrategy(strategy)
    except ValueError:
        raise ConfigurationError(f"unknown refinement strategy {strategy!r}")
    degrees, subdivisions = plan.degrees, plan.subdivisions
    if strategy in (RefinementStrategy.PIECEWISE, RefinementStrategy.COMBINED):
        subdivisions += 1
    if strategy in (RefinementStrategy.DEGREE_ELEVATE, RefinementStrategy.COMBINED):
        degrees = degrees.elevated(bump)
    return RefinementPlan(degrees, subdivisions)
