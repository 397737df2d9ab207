"""
CSRBF Parameterisation
Elastic mapping with Wendland's compactly supported C4 kernel and
least-squares fitting of trivariate B-spline solids: the front end that
turns a template volume plus a new boundary into a model with the same
structure (and therefore the same reuse key).
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import sparse
from scipy.interpolate import BSpline
from scipy.sparse import linalg as sp_la
from scipy.spatial import cKDTree

from .errors import DomainError, FitError, FormatError
from .spline_volume import BSplineVolume, KnotVector, MultiBlockVolume, greville_points

logger = logging.getLogger(__name__)

SUPPORT_FRACTION = 0.25
FIT_SMOOTHING = 1e-6
BOUNDARY_SAMPLE_WEIGHT = 10.0


def wendland(r):
    """phi(r) = (1 - r)_+^6 (3 + 18 r + 35 r^2)"""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainError("Wendland kernel needs r >= 0")
    s = np.clip(1.0 - r, 0.0, None)
    out = s ** 6 * (3.0 + 18.0 * r + 35.0 * r * r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class ElasticMap:
    """f(x) = sum_j d_j phi(|x - v_j| / support) + A x + t"""
    centers: np.ndarray
    weights: np.ndarray
    linear: np.ndarray
    translation: np.ndarray
    support: float
    _tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, '_tree', cKDTree(self.centers))

    def affine(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.linear.T + self.translation

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return map_points(self, pts)


def _bbox_diagonal(pts: np.ndarray) -> float:
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def default_support(points: np.ndarray, fraction: float = SUPPORT_FRACTION) -> float:
    return fraction * _bbox_diagonal(np.atleast_2d(points))


def fit_elastic_map(sources: np.ndarray, targets: np.ndarray, support: Optional[float] = None) -> ElasticMap:
    """
    Interpolating elastic map through v_i -> v_i'

    Solves the sparse symmetric saddle system [Phi P; P^T 0] [d; c] = [v'; 0]
    so that sum d = 0 and sum d v^T = 0.
    """
    v = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if v.shape != t.shape or v.shape[1] != 3:
        raise FormatError(f"constraint arrays must both be (n, 3), got {v.shape} and {t.shape}")
    n = len(v)
    if n < 4:
        raise FitError(f"elastic map needs at least 4 constraints, got {n}", list(range(n)))
    support = float(support) if support is not None else default_support(v)
    if support <= 0:
        raise DomainError(f"support radius must be positive, got {support}")

    tree = cKDTree(v)
    scale = _bbox_diagonal(v) or 1.0
    duplicates = tree.query_pairs(1e-12 * scale, output_type='ndarray')
    if len(duplicates):
        raise FitError("duplicate elastic-map centers", sorted(set(duplicates.ravel().tolist())))
    poly = np.column_stack([np.ones(n), v])
    if np.linalg.matrix_rank(poly) < 4:
        raise FitError("elastic-map centers are coplanar", list(range(n)))

    pairs = tree.query_pairs(support, output_type='ndarray')
    if len(pairs):
        dist = np.linalg.norm(v[pairs[:, 0]] - v[pairs[:, 1]], axis=1)
        vals = wendland(np.minimum(dist / support, 1.0))
        rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
        data = np.concatenate([vals, vals, np.full(n, wendland(0.0))])
    else:
        rows = cols = np.arange(n)
        data = np.full(n, wendland(0.0))
    phi = sparse.coo_matrix((data, (rows, cols)), shape=(n, n))
    p = sparse.csr_matrix(poly)
    system = sparse.bmat([[phi, p], [p.T, None]], format='csc')
    rhs = np.vstack([t, np.zeros((4, 3))])
    try:
        sol = sp_la.spsolve(system, rhs)
    except RuntimeError as e:
        raise FitError(f"elastic-map system is singular: {e}", list(range(n)))
    sol = np.asarray(sol).reshape(n + 4, 3)
    if not np.all(np.isfinite(sol)):
        raise FitError("elastic-map system is singular", list(range(n)))
    d, c = sol[:n], sol[n:]
    logger.debug(f"Elastic map: {n} centers, support {support:.4g}, kernel nnz {phi.nnz}")
    return ElasticMap(v, d, c[1:].T.copy(), c[0].copy(), support)


def map_points(m: ElasticMap, pts: np.ndarray) -> np.ndarray:
    """Evaluate f at (N, 3) points, visiting only centers within the support"""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    out = m.affine(pts)
    lists = m._tree.query_ball_point(pts, r=m.support)
    lengths = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    if lengths.sum() == 0:
        return out
    rows = np.repeat(np.arange(len(pts)), lengths)
    cols = np.concatenate([np.asarray(x, dtype=np.int64) for x in lists if len(x)])
    dist = np.linalg.norm(pts[rows] - m.centers[cols], axis=1)
    vals = wendland(np.minimum(dist / m.support, 1.0))
    kernel = sparse.csr_matrix((vals, (rows, cols)), shape=(len(pts), len(m.centers)))
    return out + kernel @ m.weights


@dataclass(frozen=True, eq=False)
class SampleSet:
    """
    Samples of one block: parameters, target positions and a boundary flag per sample

    A row whose position is NaN carries only a template position; the
    elastic map fills it in (complete_samples).
    """
    block: int
    params: np.ndarray
    positions: np.ndarray
    boundary: np.ndarray
    template: Optional[np.ndarray] = None

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=np.float64))
        positions = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        boundary = np.asarray(self.boundary, dtype=bool).reshape(-1)
        if params.shape[1:] != (3,) or positions.shape != params.shape or boundary.shape != (len(params),):
            raise FormatError(f"block {self.block}: inconsistent sample arrays")
        if not np.all(np.isfinite(params)) or np.any(params < 0.0) or np.any(params > 1.0):
            raise FormatError(f"block {self.block}: sample parameters must lie in [0, 1]^3")
        if self.template is not None:
            template = np.atleast_2d(np.asarray(self.template, dtype=np.float64))
            if template.shape != params.shape:
                raise FormatError(f"block {self.block}: template positions do not match the samples")
            object.__setattr__(self, 'template', template)
        object.__setattr__(self, 'params', params)
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 'boundary', boundary)

    def __len__(self) -> int:
        return len(self.params)

    def missing(self) -> np.ndarray:
        return ~np.all(np.isfinite(self.positions), axis=1)

    def constraints(self) -> Tuple[np.ndarray, np.ndarray]:
        """(template, target) pairs of boundary samples that carry both"""
        if self.template is None:
            return np.zeros((0, 3)), np.zeros((0, 3))
        mask = self.boundary & ~self.missing() & np.all(np.isfinite(self.template), axis=1)
        return self.template[mask], self.positions[mask]


def complete_samples(sets: Sequence[SampleSet], support_fraction: float = SUPPORT_FRACTION,
                     support: Optional[float] = None) -> List[SampleSet]:
    """Fill samples given only by template positions through an elastic map fitted on boundary pairs"""
    if not any(s.missing().any() for s in sets):
        return list(sets)
    pairs = [s.constraints() for s in sets]
    src = np.vstack([p[0] for p in pairs])
    dst = np.vstack([p[1] for p in pairs])
    if len(src):
        _, unique = np.unique(np.round(src, 12), axis=0, return_index=True)
        unique = np.sort(unique)
        src, dst = src[unique], dst[unique]
    if support is None and len(src):
        support = default_support(src, support_fraction)
    elastic = fit_elastic_map(src, dst, support)
    out = []
    for s in sets:
        missing = s.missing()
        if not missing.any():
            out.append(s)
            continue
        if s.template is None or not np.all(np.isfinite(s.template[missing])):
            raise FormatError(f"block {s.block}: samples without a position need a template position")
        positions = s.positions.copy()
        positions[missing] = elastic(s.template[missing])
        out.append(SampleSet(s.block, s.params, positions, s.boundary, s.template))
    logger.info(f"Completed samples with an elastic map on {len(src)} constraints")
    return out


def collocation_rows(knot_vectors: Sequence[KnotVector], params: np.ndarray) -> sparse.csr_matrix:
    """Row-wise Kronecker product of the three design matrices"""
    n = len(params)
    data, index = [], []
    for d, kv in enumerate(knot_vectors):
        dm = BSpline.design_matrix(np.clip(params[:, d], 0.0, 1.0), kv.array, kv.degree).tocsr()
        dm.sort_indices()
        k = kv.degree + 1
        data.append(dm.data.reshape(n, k))
        index.append(dm.indices.reshape(n, k))
    vals = np.einsum('ni,nj,nk->nijk', *data).reshape(n, -1)
    shape = tuple(kv.n_basis for kv in knot_vectors)
    cols = np.ravel_multi_index(
        (index[0][:, :, None, None], index[1][:, None, :, None], index[2][:, None, None, :]), shape
    ).reshape(n, -1)
    rows = np.repeat(np.arange(n), vals.shape[1])
    return sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, int(np.prod(shape))))


def _second_differences(shape: Tuple[int, int, int]) -> sparse.csr_matrix:
    blocks = []
    for d, n in enumerate(shape):
        if n < 3:
            continue
        d2 = sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n))
        factors = [sparse.identity(s) if e != d else d2 for e, s in enumerate(shape)]
        blocks.append(sparse.kron(factors[0], sparse.kron(factors[1], factors[2])))
    if not blocks:
        return sparse.csr_matrix((0, int(np.prod(shape))))
    return sparse.vstack(blocks).tocsr()


def fit_bspline_solid(samples: SampleSet, knot_vectors: Sequence[KnotVector],
                      smoothing: float = FIT_SMOOTHING,
                      boundary_weight: float = BOUNDARY_SAMPLE_WEIGHT) -> BSplineVolume:
    """
    Weighted least squares for the control grid with second-difference smoothing

    smoothing is relative to the trace of the normal matrix; 0 gives a plain
    (weighted) least-squares fit.
    """
    knot_vectors = tuple(knot_vectors)
    if samples.missing().any():
        raise FormatError(f"block {samples.block}: samples without target positions")
    shape = tuple(kv.n_basis for kv in knot_vectors)
    n_dofs = int(np.prod(shape))
    b = collocation_rows(knot_vectors, samples.params)
    w = np.where(samples.boundary, boundary_weight, 1.0)
    normal = (b.T @ sparse.diags(w) @ b).tocsc()
    rhs = b.T @ (w[:, None] * samples.positions)
    if smoothing > 0:
        d2 = _second_differences(shape)
        reg = (d2.T @ d2).tocsc()
        tr = reg.diagonal().sum()
        if tr > 0:
            normal = normal + (smoothing * normal.diagonal().sum() / tr) * reg
    try:
        solver = sp_la.splu(normal.tocsc())
        q = solver.solve(np.asarray(rhs))
    except RuntimeError:
        q = None
    if q is None or not np.all(np.isfinite(q)):
        rank = int(np.linalg.matrix_rank(normal.toarray()))
        raise FitError(f"block {samples.block}: fitting system is rank deficient", null_space=n_dofs - rank)
    return BSplineVolume(knot_vectors, q.reshape(shape + (3,)))


def greville_samples(volume: BSplineVolume, exterior_faces: Sequence[int] = ()) -> Tuple[np.ndarray, np.ndarray]:
    """Greville-product parameters of a block and a flag for those on the given faces"""
    g = [greville_points(kv) for kv in volume.knot_vectors]
    params = np.stack(np.meshgrid(*g, indexing='ij'), axis=-1).reshape(-1, 3)
    on_boundary = np.zeros(len(params), dtype=bool)
    for face in exterior_faces:
        axis, side = divmod(face, 2)
        on_boundary |= params[:, axis] == float(side)
    return params, on_boundary


def produce_consistent_model(template: MultiBlockVolume,
                             boundary_map: Callable[[np.ndarray], np.ndarray],
                             support_fraction: float = SUPPORT_FRACTION) -> MultiBlockVolume:
    """
    New family member: exterior boundary from boundary_map, interior by the
    elastic map fitted on the boundary, same degrees, knots and interfaces
    """
    exterior = template.exterior_faces()
    per_block = []
    constraints_src, constraints_dst = [], []
    for b, vol in enumerate(template.blocks):
        faces = [f for blk, f in exterior if blk == b]
        params, on_boundary = greville_samples(vol, faces)
        positions = vol.evaluate(params)
        per_block.append((params, on_boundary, positions))
        constraints_src.append(positions[on_boundary])
    src = np.vstack(constraints_src)
    tree = cKDTree(src)
    scale = _bbox_diagonal(src) or 1.0
    drop = set()
    for i, j in tree.query_pairs(1e-9 * scale):
        drop.add(max(i, j))
    keep = np.array([i for i in range(len(src)) if i not in drop], dtype=np.int64)
    src = src[keep]
    dst = np.asarray(boundary_map(src), dtype=np.float64)
    elastic = fit_elastic_map(src, dst, default_support(src, support_fraction))
    logger.info(f"Elastic map fitted on {len(src)} boundary constraints")

    blocks = []
    for b, (params, on_boundary, positions) in enumerate(per_block):
        targets = elastic(positions)
        if np.any(on_boundary):
            targets[on_boundary] = np.asarray(boundary_map(positions[on_boundary]), dtype=np.float64)
        samples = SampleSet(b, params, targets, on_boundary, template=positions)
        blocks.append(fit_bspline_solid(samples, template.blocks[b].knot_vectors, smoothing=0.0))
    snapped = MultiBlockVolume(tuple(blocks), template.interfaces, np.inf).snap_interfaces()
    return MultiBlockVolume(snapped.blocks, template.interfaces, template.merge_tolerance)
