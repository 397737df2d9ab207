"""
Gauss-Legendre rules on the unit cube and Bernstein basis tables at their
nodes. Used by the load vector, the reference assembly and error norms.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .bernstein import Degrees, bernstein_basis, bernstein_basis_derivative


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """n-point rule mapped to [0, 1]"""
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class TensorRule:
    points: np.ndarray
    weights: np.ndarray
    nodes_1d: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def tensor_rule(n: int) -> TensorRule:
    """n^3 points in C order over (u, v, w)"""
    x, w = gauss_legendre(n)
    points = np.stack(np.meshgrid(x, x, x, indexing='ij'), axis=-1).reshape(-1, 3)
    weights = np.einsum('i,j,k->ijk', w, w, w).ravel()
    return TensorRule(points, weights, x)


def basis_table(degrees: Degrees, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trivariate Bernstein values (N, nb) and parameter gradients (N, 3, nb)
    at an (N, 3) array of points; basis numbered in C order
    """
    vals = [bernstein_basis(p, points[:, d]) for d, p in enumerate(degrees)]
    ders = [bernstein_basis_derivative(p, points[:, d]) for d, p in enumerate(degrees)]
    n = points.shape[0]
    values = np.einsum('ni,nj,nk->nijk', *vals).reshape(n, -1)
    grads = np.stack([
        np.einsum('ni,nj,nk->nijk', ders[0], vals[1], vals[2]).reshape(n, -1),
        np.einsum('ni,nj,nk->nijk', vals[0], ders[1], vals[2]).reshape(n, -1),
        np.einsum('ni,nj,nk->nijk', vals[0], vals[1], ders[2]).reshape(n, -1),
    ], axis=1)
    return values, grads
