"""
Element Kernel
Element stiffness matrices over the Bernstein basis of one extracted element.

Two quadrature-free modes share one factorisation of the approximation
system per element:
  per_entry - numerator, approximation and integral for every basis pair
  adjoint   - one transposed solve gives integration weights over the
              numerator coefficients; every pair is then a contraction of
              those weights with the metric and gradient products
The Gauss mode evaluates the rational integrand at tensor Gauss points and
serves as the reference.

ElementKernel takes its degree-only tables from the caller (normally a
reuse-cache entry). ScratchElementKernel rebuilds them for every element and
is the no-reuse baseline.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .bernstein import BINOMIALS, Degrees, ProductSkeleton, binomial_weights, derivative_matrix, elevate
from .errors import ConfigurationError
from .geometry_terms import (
    BasisGradients, CofactorSet, DCoefficientTable, basis_gradients, build_d_table, build_product_skeleton,
    cofactors, entry_numerator, jacobian_expansion, report_degree_overrun,
)
from .polynomial_approx import ApproxDegrees, ApproxSystem, ElementApproximation, build_reusable
from .quadrature import basis_table, tensor_rule
from .spline_volume import BezierVolume

logger = logging.getLogger(__name__)

PAIRS = tuple((p, q) for p in range(3) for q in range(p, 3))

PairTables = Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray, np.ndarray]]


class EntryMode(Enum):
    ADJOINT = "adjoint"
    PER_ENTRY = "per_entry"
    GAUSS = "gauss"


@dataclass(frozen=True, eq=False)
class ElementResult:
    """Bernstein-basis stiffness of one element plus its diagnostics"""
    stiffness: np.ndarray
    jacobian_min: float
    rcond: float = 1.0


def scaled_factor_matrices(degrees: Degrees):
    """Per-direction scaled identity and derivative maps from basis index to coefficient index"""
    ident, deriv = [], []
    for p in degrees:
        ident.append(np.diag(BINOMIALS.row(p)))
        deriv.append(derivative_matrix(p) * BINOMIALS.row(p - 1)[None, :])
    return ident, deriv


def _pair_table(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """H[s, a, b] = sum over x + y == s of u[a, x] v[b, y]"""
    h = np.zeros((u.shape[1] + v.shape[1] - 1, u.shape[0], v.shape[0]))
    for x in range(u.shape[1]):
        for y in range(v.shape[1]):
            h[x + y] += np.outer(u[:, x], v[:, y])
    h.setflags(write=False)
    return h


def gradient_pair_tables(ident, deriv) -> PairTables:
    """
    Per-direction tables of the gradient products d/du_p B_a * d/du_q B_b

    tables[(p, q)][d] acts on direction d, with the derivative factor where
    d == p (first function) or d == q (second function).
    """
    tables = {}
    for p, q in PAIRS:
        tables[(p, q)] = tuple(
            _pair_table(deriv[d] if d == p else ident[d], deriv[d] if d == q else ident[d]) for d in range(3))
    return tables


def pair_table_items(tables: PairTables) -> Dict[str, np.ndarray]:
    return {f"pair_{p}{q}_{'uvw'[d]}": t for (p, q), ts in tables.items() for d, t in enumerate(ts)}


class ElementKernel:
    """Evaluates element stiffness matrices for one degree configuration"""

    def __init__(self, degrees: Degrees, d_table: DCoefficientTable, gradients: BasisGradients,
                 system: ApproxSystem, mode: EntryMode = EntryMode.ADJOINT, subdivisions: int = 0,
                 gauss_points: Optional[int] = None,
                 products: Optional[ProductSkeleton] = None, pair_tables: Optional[PairTables] = None):
        self.degrees = tuple(degrees)
        self.d_table = d_table
        self.gradients = gradients
        self.system = system
        self.mode = EntryMode(mode)
        self.subdivisions = subdivisions
        self.gauss_points = gauss_points or max(self.degrees) + 1
        self._n_basis = int(np.prod([p + 1 for p in self.degrees]))
        if self.mode is EntryMode.GAUSS:
            return
        report_degree_overrun(self.degrees)
        self.products = products or build_product_skeleton(self.degrees)
        self.pair_tables = pair_tables or gradient_pair_tables(*scaled_factor_matrices(self.degrees))

    def evaluate(self, bezier: BezierVolume) -> ElementResult:
        if self.mode is EntryMode.GAUSS:
            return gauss_stiffness(bezier, self.gauss_points)
        jac = jacobian_expansion(bezier, self.d_table)
        jmin = jac.sample_minimum()
        approx = self.system.prepare(jac, self.subdivisions, bezier.block, bezier.element)
        cof = cofactors(bezier, self.products)
        if self.mode is EntryMode.PER_ENTRY:
            k = self._per_entry(cof, jac, approx)
        else:
            k = self._adjoint(cof, approx.weights())
        return ElementResult(k, jmin, approx.min_rcond)

    def _per_entry(self, cof: CofactorSet, jac, approx: ElementApproximation) -> np.ndarray:
        nb = self._n_basis
        k = np.zeros((nb, nb))
        grads = [self.gradients.of(a) for a in range(nb)]
        for a in range(nb):
            for b in range(a, nb):
                num = entry_numerator(cof, jac, grads[a], grads[b], pair=(a, b))
                k[a, b] = k[b, a] = approx.integrate(num)
        return k

    def _adjoint(self, cof: CofactorSet, weights: np.ndarray) -> np.ndarray:
        w_hat = weights / binomial_weights(self.system.numerator_degrees)
        nb = self._n_basis
        k = np.zeros((nb, nb))
        for p, q in PAIRS:
            kpq = self._pair_block(cof, w_hat, p, q)
            k += kpq if p == q else kpq + kpq.T
        return 0.5 * (k + k.T)

    def _pair_block(self, cof: CofactorSet, w_hat: np.ndarray, p: int, q: int) -> np.ndarray:
        """sum_jk psi[j+k] U_a[j] V_b[k] with U = d/du_p, V = d/du_q"""
        hu, hv, hw = self.pair_tables[(p, q)]
        target = tuple(n - h.shape[0] + 1 for n, h in zip(self.system.numerator_degrees, (hu, hv, hw)))
        metric = elevate(cof.metric(p, q), target).scaled()
        windows = sliding_window_view(w_hat, metric.shape)
        psi = np.einsum('xyzijk,ijk->xyz', windows, metric)
        t = np.tensordot(psi, hu, axes=(0, 0))  # y,z,a,d
        t = np.tensordot(t, hv, axes=(0, 0))  # z,a,d,b,e
        t = np.tensordot(t, hw, axes=(0, 0))  # a,d,b,e,c,f
        nb = self._n_basis
        return t.transpose(0, 2, 4, 1, 3, 5).reshape(nb, nb)


class ScratchElementKernel:
    """
    Element kernel without reuse

    Every evaluate() builds the D table, gradients, product skeleton, pair
    tables and approximation system afresh, then runs ElementKernel on them.
    The tables come out of the same builders as a cache entry's, so the
    stiffness matches a cached evaluation bit for bit.
    """

    def __init__(self, degrees: Degrees, approx_degrees: ApproxDegrees,
                 mode: EntryMode = EntryMode.ADJOINT, subdivisions: int = 0):
        self.degrees = tuple(degrees)
        self.approx_degrees = approx_degrees
        self.mode = EntryMode(mode)
        if self.mode is EntryMode.GAUSS:
            raise ConfigurationError("the scratch kernel is quadrature-free; use the reference assembly for Gauss")
        self.subdivisions = subdivisions

    def evaluate(self, bezier: BezierVolume) -> ElementResult:
        ident, deriv = scaled_factor_matrices(self.degrees)
        kernel = ElementKernel(
            self.degrees, build_d_table(self.degrees), basis_gradients(self.degrees),
            build_reusable(*self.approx_degrees.as_tuple(), *self.degrees), self.mode, self.subdivisions,
            products=build_product_skeleton(self.degrees), pair_tables=gradient_pair_tables(ident, deriv),
        )
        return kernel.evaluate(bezier)


def gauss_stiffness(bezier: BezierVolume, n_points: int) -> ElementResult:
    """Tensor Gauss-Legendre quadrature of the rational stiffness integrand"""
    rule = tensor_rule(n_points)
    jp, det = geometry_jacobians(bezier, rule.points)
    _, grads = basis_table(bezier.degrees, rule.points)
    phys = np.linalg.solve(jp, grads)
    k = np.einsum('n,nia,nib->ab', rule.weights * det, phys, phys)
    return ElementResult(0.5 * (k + k.T), float(np.min(det)))


def geometry_jacobians(bezier: BezierVolume, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Row-layout Jacobians Jp[n, p, i] = d x_i / d u_p and their determinants"""
    _, grads = basis_table(bezier.degrees, points)
    cp = bezier.control_points.reshape(-1, 3)
    jp = np.einsum('npa,ai->npi', grads, cp)
    return jp, np.linalg.det(jp)
