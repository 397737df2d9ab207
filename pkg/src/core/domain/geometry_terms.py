"""
Geometry Terms
Closed-form Bernstein expansions of the per-element Jacobian determinant, the
cofactor (adjugate) entries and the rational stiffness integrand numerator.

All quantities are polynomials in the element-local coordinates of an
extracted BezierVolume, so the stiffness integrand of a basis pair is
numerator / J with one common denominator.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import itertools
import logging
import threading
import warnings

import numpy as np

from .bernstein import (
    BINOMIALS, BernsteinTensor, Degrees, ProductSkeleton, apply_along_axis, bernstein_basis, derivative,
    derivative_matrix, elevate, evaluate_many, product,
)
from .errors import DegreeOverrunWarning, DomainError
from .spline_volume import BezierVolume

logger = logging.getLogger(__name__)

DEGENERACY_GRID = 11
_LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_a, _b, _c] = 1.0
    _LEVI_CIVITA[_a, _c, _b] = -1.0

_overrun_lock = threading.Lock()
_overrun_reported = set()


def jacobian_degrees(degrees: Degrees) -> Degrees:
    return tuple(3 * p - 1 for p in degrees)


def nominal_numerator_degrees(degrees: Degrees) -> Degrees:
    return tuple(6 * p - 4 for p in degrees)


def numerator_degrees(degrees: Degrees) -> Degrees:
    """
    Audited degree of the stiffness numerator

    A cofactor row has degree 2p in its own direction, a metric entry
    4p-2 or less, and each gradient product restores the rest: every addend
    lands on exactly 6p-2 per direction.
    """
    return tuple(6 * p - 2 for p in degrees)


def report_degree_overrun(degrees: Degrees):
    """Warn once per degree triple that the numerator exceeds its nominal degree"""
    degrees = tuple(degrees)
    with _overrun_lock:
        if degrees in _overrun_reported:
            return
        _overrun_reported.add(degrees)
    nominal = nominal_numerator_degrees(degrees)
    audited = numerator_degrees(degrees)
    message = (f"stiffness numerator for degrees {degrees} has audited degrees {audited}, "
               f"above the nominal {nominal}; using {audited}")
    logger.warning(message)
    warnings.warn(message, DegreeOverrunWarning, stacklevel=3)


@dataclass(frozen=True, eq=False)
class DCoefficientTable:
    """
    Combinatorial weights of the Jacobian triple sum

    The weight of a decomposition factorises per direction. Along u it is
    l C(l-1,i1) C(l,i2) C(l,i3) / C(3l-1, i1+i2+i3), indexed [i1, i2, i3],
    and likewise along v (difference in the second slot) and w (third slot).

    scatter[d][s, a, b, c] holds the factor where a + b + c == s and zero
    elsewhere; it maps determinant terms straight onto J coefficients.
    """
    degrees: Degrees
    factors: Tuple[np.ndarray, np.ndarray, np.ndarray]
    scatter: Tuple[np.ndarray, np.ndarray, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'scatter', tuple(
            _scatter(f, 3 * p) for f, p in zip(self.factors, self.degrees)))

    def weight(self, iu: Sequence[int], iv: Sequence[int], iw: Sequence[int]) -> float:
        """Full weight of one decomposition (i1,i2,i3), (j1,j2,j3), (k1,k2,k3)"""
        return float(self.factors[0][tuple(iu)] * self.factors[1][tuple(iv)] * self.factors[2][tuple(iw)])

    def dense(self) -> np.ndarray:
        """Table over all nine decomposition indices, in (i1,i2,i3, j1,j2,j3, k1,k2,k3) order"""
        return np.einsum('abc,def,ghi->abcdefghi', *self.factors)

    @property
    def size(self) -> int:
        return int(sum(f.size for f in self.factors))


def _direction_factor(p: int, slot: int) -> np.ndarray:
    shapes = [p + 1, p + 1, p + 1]
    shapes[slot] = p
    table = np.zeros(shapes)
    for idx in itertools.product(*(range(s) for s in shapes)):
        num = float(p)
        for s, i in enumerate(idx):
            num *= BINOMIALS.binomial(p - 1 if s == slot else p, i)
        table[idx] = num / BINOMIALS.binomial(3 * p - 1, sum(idx))
    table.setflags(write=False)
    return table


def _scatter(factor: np.ndarray, size: int) -> np.ndarray:
    sums = _sum_index(factor.shape)
    table = (np.arange(size).reshape(-1, 1, 1, 1) == sums[None]) * factor[None]
    table.setflags(write=False)
    return table


def build_d_table(degrees: Degrees) -> DCoefficientTable:
    """D weights for one degree triple (geometry independent, built once)"""
    degrees = tuple(int(p) for p in degrees)
    if min(degrees) < 1:
        raise DomainError(f"degrees must be >= 1, got {degrees}")
    for p in degrees:
        BINOMIALS.require_exact(3 * p - 1, "Jacobian expansion")
    factors = tuple(_direction_factor(p, slot) for slot, p in enumerate(degrees))
    logger.debug(f"Built D table for degrees {degrees}")
    return DCoefficientTable(degrees, factors)


@dataclass(frozen=True, eq=False)
class JacobianExpansion:
    """det of the geometry Jacobian as a Bernstein tensor of degrees (3l-1, 3m-1, 3n-1)"""
    tensor: BernsteinTensor

    def sample_minimum(self, n: int = DEGENERACY_GRID) -> float:
        """Smallest value of J on an n^3 lattice of the element"""
        t = np.linspace(0.0, 1.0, n)
        values = self.tensor.coeffs
        for axis, d in enumerate(self.tensor.degrees):
            values = apply_along_axis(values, bernstein_basis(d, t), axis)
        return float(np.min(values))

    def is_degenerate(self) -> bool:
        return self.sample_minimum() <= 0.0


def _sum_index(shape: Sequence[int]) -> np.ndarray:
    grids = np.meshgrid(*(np.arange(s) for s in shape), indexing='ij')
    return sum(grids)


def jacobian_expansion(b: BezierVolume, d: DCoefficientTable) -> JacobianExpansion:
    """J_ijk as the D-weighted sum of determinants of control-point differences"""
    l, m, n = b.degrees
    if d.degrees != (l, m, n):
        raise DomainError(f"D table degrees {d.degrees} do not match element degrees {b.degrees}")
    p = b.control_points
    du = p[1:, :, :] - p[:-1, :, :]
    dv = p[:, 1:, :] - p[:, :-1, :]
    dw = p[:, :, 1:] - p[:, :, :-1]
    # dets[i1,j1,k1, i2,j2,k2, i3,j3,k3] = du . (dv x dw)
    cross = np.cross(dv[:, :, :, None, None, None, :], dw[None, None, None, :, :, :, :])
    dets = np.tensordot(du, cross, axes=(3, 6))
    su, sv, sw = d.scatter
    c = np.tensordot(dets, su, axes=((0, 3, 6), (1, 2, 3)))  # j1,k1,j2,k2,j3,k3,s
    c = np.tensordot(c, sv, axes=((0, 2, 4), (1, 2, 3)))  # k1,k2,k3,s,t
    c = np.tensordot(c, sw, axes=((0, 1, 2), (1, 2, 3)))
    return JacobianExpansion(BernsteinTensor(jacobian_degrees((l, m, n)), c))


def geometry_gradients(b: BezierVolume) -> List[List[BernsteinTensor]]:
    """c[p][i] = d x_i / d u_p as Bernstein tensors"""
    coords = [b.coordinate(i) for i in range(3)]
    return [[derivative(coords[i], p) for i in range(3)] for p in range(3)]


def _sum(terms: Sequence[BernsteinTensor]) -> BernsteinTensor:
    target = tuple(max(t.degrees[a] for t in terms) for a in range(3))
    total = np.zeros(tuple(q + 1 for q in target))
    for t in terms:
        total = total + elevate(t, target).coeffs
    return BernsteinTensor(target, total)


def jacobian_by_products(b: BezierVolume) -> JacobianExpansion:
    """Independent route: det expanded with Bernstein products of the three gradient tensors"""
    c = geometry_gradients(b)
    terms = []
    for a, bb, cc in itertools.permutations(range(3)):
        sign = _LEVI_CIVITA[a, bb, cc]
        terms.append(product(product(c[0][a], c[1][bb]), c[2][cc]) * sign)
    return JacobianExpansion(_sum(terms))


@dataclass(frozen=True, eq=False)
class CofactorSet:
    """
    entries[p][i] = J * d u_p / d x_i

    Row p is the cross product of the two other parameter-direction
    tangents, so entries . (d x / d u) = J * I.
    """
    entries: Tuple[Tuple[BernsteinTensor, ...], ...]
    products: Optional[ProductSkeleton] = field(default=None, repr=False)
    _metric: Dict[Tuple[int, int], BernsteinTensor] = field(default_factory=dict, repr=False)

    def matrix_at(self, u: Sequence[float]) -> np.ndarray:
        pt = np.asarray(u, dtype=np.float64).reshape(1, 3)
        return np.array([[evaluate_many(self.entries[p][i], pt)[0] for i in range(3)] for p in range(3)])

    def metric(self, p: int, q: int) -> BernsteinTensor:
        """M_pq = sum_i entries[p][i] entries[q][i]"""
        key = (min(p, q), max(p, q))
        if key not in self._metric:
            if self.products is None:
                self._metric[key] = _sum([product(self.entries[p][i], self.entries[q][i]) for i in range(3)])
            else:
                self._metric[key] = self.products.dot(self.entries[key[0]], self.entries[key[1]])
        return self._metric[key]


def cofactors(b: BezierVolume, products: Optional[ProductSkeleton] = None) -> CofactorSet:
    """Cofactor rows of one element; with a product skeleton every product goes through its tables"""
    c = geometry_gradients(b)

    def cross(x: List[BernsteinTensor], y: List[BernsteinTensor]) -> Tuple[BernsteinTensor, ...]:
        if products is not None:
            return tuple(
                products.dot([x[(i + 1) % 3], x[(i + 2) % 3]], [y[(i + 2) % 3], y[(i + 1) % 3]], (1.0, -1.0))
                for i in range(3)
            )
        return tuple(
            _sum([product(x[(i + 1) % 3], y[(i + 2) % 3]), -product(x[(i + 2) % 3], y[(i + 1) % 3])])
            for i in range(3)
        )

    rows = (cross(c[1], c[2]), cross(c[2], c[0]), cross(c[0], c[1]))
    return CofactorSet(rows, products)


def cofactor_product_pairs(degrees: Degrees) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
    """
    Per-direction degree pairs of every product behind the cofactors and
    their metric: gradient by gradient (p-1 or p) and row by row (2p-1 or 2p)
    """
    out = []
    for p in degrees:
        low, high = (p - 1, p), (2 * p - 1, 2 * p)
        out.append(tuple(itertools.product(low, low)) + tuple(itertools.product(high, high)))
    return tuple(out)


def build_product_skeleton(degrees: Degrees) -> ProductSkeleton:
    """Product tables for one degree triple (geometry independent, built once)"""
    degrees = tuple(int(p) for p in degrees)
    skeleton = ProductSkeleton.build(cofactor_product_pairs(degrees))
    logger.debug(f"Built product skeleton for degrees {degrees}")
    return skeleton


def jacobian_matrix(b: BezierVolume, u: Sequence[float]) -> np.ndarray:
    """Row layout: row p holds (x_{u_p}, y_{u_p}, z_{u_p}) at u"""
    pt = np.asarray(u, dtype=np.float64).reshape(1, 3)
    c = geometry_gradients(b)
    return np.array([[evaluate_many(c[p][i], pt)[0] for i in range(3)] for p in range(3)])


@dataclass(frozen=True, eq=False)
class BasisGradients:
    """
    d B_a / d u_p for every Bernstein basis function a of one degree triple

    coeffs[p] has shape (n_basis, ...) with the degree dropped by one along p.
    Basis functions are numbered in C order over (i, j, k).
    """
    degrees: Degrees
    coeffs: Tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def n_basis(self) -> int:
        return int(np.prod([p + 1 for p in self.degrees]))

    def tensor(self, a: int, p: int) -> BernsteinTensor:
        degrees = list(self.degrees)
        degrees[p] -= 1
        return BernsteinTensor(tuple(degrees), self.coeffs[p][a])

    def of(self, a: int) -> Tuple[BernsteinTensor, BernsteinTensor, BernsteinTensor]:
        return tuple(self.tensor(a, p) for p in range(3))


def basis_gradients(degrees: Degrees) -> BasisGradients:
    degrees = tuple(int(p) for p in degrees)
    eyes = [np.eye(p + 1) for p in degrees]
    out = []
    for p in range(3):
        factors = [eyes[d] if d != p else derivative_matrix(degrees[d]) for d in range(3)]
        # factors[d][a_d, j_d]; stack to (a, j-grid)
        g = np.einsum('ax,by,cz->abcxyz', *factors).reshape((-1,) + tuple(f.shape[1] for f in factors))
        g.setflags(write=False)
        out.append(g)
    return BasisGradients(degrees, tuple(out))


@dataclass(frozen=True, eq=False)
class EntryNumerator:
    """Numerator of the stiffness integrand of one basis pair; F = tensor / J"""
    tensor: BernsteinTensor
    pair: Tuple[int, int] = (0, 0)


def entry_numerator(cof: CofactorSet, jac: JacobianExpansion,
                    grad_a: Sequence[BernsteinTensor], grad_b: Sequence[BernsteinTensor],
                    pair: Tuple[int, int] = (0, 0)) -> EntryNumerator:
    """
    sum_pq M_pq dB_a/du_p dB_b/du_q with the mixed terms paired, so that the
    result is coefficientwise symmetric in (a, b)
    """
    spline_degrees = tuple((q + 1) // 3 for q in jac.tensor.degrees)
    target = numerator_degrees(spline_degrees)
    report_degree_overrun(spline_degrees)
    terms = []
    for p in range(3):
        for q in range(p, 3):
            if p == q:
                grad = product(grad_a[p], grad_b[p])
            else:
                grad = _sum([product(grad_a[p], grad_b[q]), product(grad_a[q], grad_b[p])])
            term = product(cof.metric(p, q), grad)
            if any(t > s for t, s in zip(term.degrees, target)):
                raise DomainError(f"numerator term degrees {term.degrees} exceed {target}")
            terms.append(elevate(term, target))
    total = np.zeros(tuple(s + 1 for s in target))
    for t in terms:
        total = total + t.coeffs
    return EntryNumerator(BernsteinTensor(target, total), pair)


def rational_integrand(b: BezierVolume, grad_a_values: np.ndarray, grad_b_values: np.ndarray,
                       u: np.ndarray) -> np.ndarray:
    """
    Direct pointwise F(u) = grad_a^T Jp^-1 Jp^-T grad_b * det(Jp) from numeric
    partials; grad_*_values are (N, 3) parameter-space gradients at u
    """
    u = np.atleast_2d(u)
    c = geometry_gradients(b)
    jp = np.stack([np.stack([evaluate_many(c[p][i], u) for i in range(3)], axis=-1) for p in range(3)], axis=1)
    det = np.linalg.det(jp)
    inv = np.linalg.inv(jp)
    ga = np.einsum('nip,np->ni', inv, grad_a_values)
    gb = np.einsum('nip,np->ni', inv, grad_b_values)
    return np.einsum('ni,ni->n', ga, gb) * det
