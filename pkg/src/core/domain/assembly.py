"""
Heat Assembly
Galerkin assembly of the steady heat-conduction system over a multi-block
spline volume, Dirichlet imposition by boundary collocation, sparse solve
and error norms.

Sign convention: -Laplace(T) = -g, i.e. K T = S with S = -int g B J.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Set, Tuple
import hashlib
import logging
import time

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sp_la

from .element_kernel import (
    ElementKernel, EntryMode, ScratchElementKernel, geometry_jacobians, gradient_pair_tables, pair_table_items,
    scaled_factor_matrices,
)
from .errors import ConfigurationError, SolverError
from .events import DomainEvent, ElementWarningEvent, EventType, SolveEvent
from .geometry_terms import basis_gradients, build_d_table, build_product_skeleton
from .polynomial_approx import RCOND_WARNING, ApproxDegrees, build_reusable
from .quadrature import basis_table, tensor_rule
from .reuse_cache import CacheEntry, CacheKey, ReuseCache, boundary_signature
from .spline_volume import (
    FACE_NAMES, BezierVolume, ExtractionOperator, MultiBlockVolume, element_local_dofs,
    extract_bezier, face_grid, greville_points,
)

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]

DIRECT_SOLVER_MAX_DOF = 20000
CG_RTOL = 1e-10


def _zero_field(points: np.ndarray) -> np.ndarray:
    return np.zeros(len(np.atleast_2d(points)))


@dataclass(frozen=True, eq=False)
class HeatProblem:
    """
    Steady heat conduction on a multi-block domain

    source and dirichlet map an (N, 3) array of physical points to N values.
    """
    domain: MultiBlockVolume
    source: ScalarField = _zero_field
    dirichlet: ScalarField = _zero_field
    dirichlet_faces: Tuple[Tuple[int, int], ...] = ()
    approx_degree_bump: int = 0
    approx_subdivisions: int = 0
    exact: Optional[ScalarField] = None

    def __post_init__(self):
        faces = tuple((int(b), int(f)) for b, f in self.dirichlet_faces)
        if not faces:
            raise ConfigurationError("at least one Dirichlet face is required")
        exterior = set(self.domain.exterior_faces())
        for b, f in faces:
            if not (0 <= b < len(self.domain.blocks)) or not (0 <= f < 6):
                raise ConfigurationError(f"Dirichlet face {(b, f)} does not exist")
            if (b, f) not in exterior:
                raise ConfigurationError(f"Dirichlet face ({b}, {FACE_NAMES[f]}) is an interface face")
        if self.approx_degree_bump < 0 or self.approx_subdivisions < 0:
            raise ConfigurationError("approximation bump and subdivisions must be >= 0")
        object.__setattr__(self, 'dirichlet_faces', tuple(sorted(set(faces))))

    @property
    def approx_degrees(self) -> ApproxDegrees:
        return ApproxDegrees.default(self.domain.degrees).elevated(self.approx_degree_bump)

    def with_domain(self, domain: MultiBlockVolume) -> "HeatProblem":
        return HeatProblem(domain, self.source, self.dirichlet, self.dirichlet_faces,
                           self.approx_degree_bump, self.approx_subdivisions, self.exact)


@dataclass(frozen=True, eq=False)
class GlobalSystem:
    stiffness: sparse.csr_matrix
    load: np.ndarray
    domain: MultiBlockVolume
    boundary_dofs: np.ndarray
    key_hash: str = ""
    assembly_seconds: float = 0.0

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    def checksum(self) -> str:
        """Hash of the stiffness entries sorted by (row, col)"""
        coo = self.stiffness.tocoo()
        order = np.lexsort((coo.col, coo.row))
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(coo.row[order], dtype='<i8').tobytes())
        h.update(np.ascontiguousarray(coo.col[order], dtype='<i8').tobytes())
        h.update(np.ascontiguousarray(coo.data[order], dtype='<f8').tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    matrix: sparse.csr_matrix
    load: np.ndarray
    interior_dofs: np.ndarray
    boundary_dofs: np.ndarray
    boundary_values: np.ndarray
    domain: MultiBlockVolume
    collocation_residual: float = 0.0


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    residual_history: List[float] = field(default_factory=list)


class ErrorNorm(NamedTuple):
    value: float
    relative: bool


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Control variables T per global DOF over a domain"""
    coefficients: np.ndarray
    domain: MultiBlockVolume
    report: Optional[SolveReport] = None

    def block_coefficients(self, block: int) -> np.ndarray:
        vol = self.domain.blocks[block]
        return self.coefficients[self.domain.dof_map.block_maps[block]].reshape(vol.shape)

    def evaluate(self, block: int, params: np.ndarray) -> np.ndarray:
        """T at an (N, 3) array of block parameters"""
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        kvs = self.domain.blocks[block].knot_vectors
        bu, bv, bw = (kv.basis_matrix(params[:, d]) for d, kv in enumerate(kvs))
        return np.einsum('ni,nj,nk,ijk->n', bu, bv, bw, self.block_coefficients(block))

    def element_samples(self, n: int = 3) -> np.ndarray:
        """Rows (x, y, z, T) on an n^3 lattice of every element, block by block"""
        t = np.linspace(0.0, 1.0, n)
        local = np.stack(np.meshgrid(t, t, t, indexing='ij'), axis=-1).reshape(-1, 3)
        rows = []
        for b, vol in enumerate(self.domain.blocks):
            for bez in extract_bezier(vol, b):
                params = bez.to_block(local)
                rows.append(np.column_stack([bez.evaluate(local), self.evaluate(b, params)]))
        return np.vstack(rows)


def collocation_layout(domain: MultiBlockVolume, faces: Sequence[Tuple[int, int]]
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Boundary DOFs (sorted, global) and one collocation site per DOF

    Each site is the Greville point of the DOF's first owner on a Dirichlet
    face, given as (block, u, v, w).
    """
    owners: Dict[int, Tuple[int, int]] = {}
    for b, f in faces:
        vol = domain.blocks[b]
        for local in face_grid(vol.shape, f).ravel():
            g = int(domain.dof_map.block_maps[b][local])
            owners.setdefault(g, (b, int(local)))
    dofs = np.array(sorted(owners), dtype=np.int64)
    sites = np.zeros((len(dofs), 4))
    greville = [[greville_points(kv) for kv in vol.knot_vectors] for vol in domain.blocks]
    for row, g in enumerate(dofs):
        b, local = owners[int(g)]
        i, j, k = np.unravel_index(local, domain.blocks[b].shape)
        sites[row] = (b, greville[b][0][i], greville[b][1][j], greville[b][2][k])
    return dofs, sites


def collocation_matrix(domain: MultiBlockVolume, dofs: np.ndarray, sites: np.ndarray) -> sparse.csc_matrix:
    """M[s, j] = N_j(site s) restricted to the boundary DOFs"""
    position = {int(g): c for c, g in enumerate(dofs)}
    rows, cols, vals = [], [], []
    for s, (b, u, v, w) in enumerate(sites):
        b = int(b)
        vol = domain.blocks[b]
        bu, bv, bw = (kv.basis_matrix([t])[0] for kv, t in zip(vol.knot_vectors, (u, v, w)))
        values = np.einsum('i,j,k->ijk', bu, bv, bw).ravel()
        for local in np.nonzero(values)[0]:
            g = int(domain.dof_map.block_maps[b][local])
            if g in position:
                rows.append(s)
                cols.append(position[g])
                vals.append(values[local])
    n = len(dofs)
    m = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    m.sum_duplicates()
    return m


def structure_builders(problem: HeatProblem) -> Dict[str, Callable[[], Dict[str, np.ndarray]]]:
    """Builders for every reusable item of a problem's structure"""
    domain = problem.domain
    degrees = tuple(domain.degrees)
    approx = problem.approx_degrees

    def d_table():
        table = build_d_table(degrees)
        return {f"d_table_{n}": f for n, f in zip("uvw", table.factors)}

    def gradients():
        g = basis_gradients(degrees)
        return {f"gradients_{n}": c for n, c in zip("uvw", g.coeffs)}

    def product_skeletons():
        out = build_product_skeleton(degrees).items()
        out.update(pair_table_items(gradient_pair_tables(*scaled_factor_matrices(degrees))))
        return out

    def approximation():
        system = build_reusable(*approx.as_tuple(), *degrees)
        out = {f"approx_{name}": arr for name, arr in system.items().items()}
        out["numerator_degrees"] = np.array(system.numerator_degrees, dtype=np.float64)
        return out

    def extraction():
        out = {}
        for b, vol in enumerate(domain.blocks):
            ext = ExtractionOperator.for_volume(vol)
            for d, n in enumerate("uvw"):
                out[f"extraction_b{b}_{n}"] = ext.operators[d]
                out[f"spans_b{b}_{n}"] = np.array(ext.spans[d], dtype=np.float64)
        return out

    def dofs():
        out = {f"dof_map_b{b}": bm.astype(np.float64) for b, bm in enumerate(domain.dof_map.block_maps)}
        out["n_dofs"] = np.array([domain.n_dofs], dtype=np.float64)
        return out

    def collocation():
        bdofs, sites = collocation_layout(domain, problem.dirichlet_faces)
        m = collocation_matrix(domain, bdofs, sites).tocoo()
        return {
            "boundary_dofs": bdofs.astype(np.float64),
            "collocation_sites": sites,
            "collocation_data": m.data,
            "collocation_row": m.row.astype(np.float64),
            "collocation_col": m.col.astype(np.float64),
        }

    return {
        "d_table": d_table,
        "gradients": gradients,
        "product_skeletons": product_skeletons,
        "approximation": approximation,
        "extraction": extraction,
        "dofs": dofs,
        "collocation": collocation,
    }


@dataclass(frozen=True, eq=False)
class _ElementJob:
    bezier: BezierVolume
    operator: np.ndarray
    dofs: np.ndarray


@dataclass(frozen=True, eq=False)
class _ElementOutput:
    dofs: np.ndarray
    stiffness: np.ndarray
    load: np.ndarray
    jacobian_min: float
    rcond: float


class HeatAssembler:
    """
    Assembles, constrains and solves HeatProblems

    Reusable data comes from a ReuseCache; the element loop runs on a thread
    pool and is merged in element order, so the thread count never changes
    the result.
    """

    def __init__(self, cache: Optional[ReuseCache] = None, mode: EntryMode = EntryMode.ADJOINT,
                 threads: int = 1, rcond_warning: float = RCOND_WARNING,
                 direct_max_dof: int = DIRECT_SOLVER_MAX_DOF, cg_rtol: float = CG_RTOL):
        self.cache = cache if cache is not None else ReuseCache()
        self.mode = EntryMode(mode)
        self.threads = max(1, int(threads))
        self.rcond_warning = rcond_warning
        self.direct_max_dof = direct_max_dof
        self.cg_rtol = cg_rtol
        self._event_listeners: List[Callable[[DomainEvent], None]] = []
        self._conditioning_reported: Set[str] = set()

    def register_event_listener(self, listener: Callable[[DomainEvent], None]):
        """Register a listener for assembly and solve events"""
        self._event_listeners.append(listener)
        self.cache.register_event_listener(listener)

    def _emit_event(self, event: DomainEvent):
        for listener in self._event_listeners:
            try:
                listener(event)
            except Exception as e:
                logger.error(f"Error in event listener: {e}")

    def key_for(self, problem: HeatProblem) -> CacheKey:
        bdofs, sites = collocation_layout(problem.domain, problem.dirichlet_faces)
        return CacheKey.for_model(problem.domain, problem.approx_degrees, problem.approx_subdivisions,
                                  boundary_signature(sites, bdofs))

    def prepare(self, problem: HeatProblem) -> CacheEntry:
        return self.cache.get_or_build(self.key_for(problem), structure_builders(problem))

    def assemble(self, problem: HeatProblem, entry: Optional[CacheEntry] = None) -> GlobalSystem:
        """Quadrature-free stiffness, Gauss load, accumulated over all elements"""
        entry = entry or self.prepare(problem)
        key = self.key_for(problem)
        if entry.key != key:
            raise ConfigurationError(f"cache entry {entry.key_hash} does not match the model ({key.key_hash()})")
        kernel = ElementKernel(problem.domain.degrees, entry.d_table(), entry.gradients(),
                               entry.approx_system(), self.mode, problem.approx_subdivisions,
                               products=entry.product_skeleton(), pair_tables=entry.pair_tables())
        return self._assemble(problem, kernel, entry.extraction, entry.block_dof_map, entry.boundary_dofs,
                              entry.key_hash)

    def assemble_without_reuse(self, problem: HeatProblem) -> GlobalSystem:
        """
        The same quadrature-free system with nothing shared: extraction and
        boundary layout are rebuilt for the model and every degree-only table
        for each element. Baseline for the reuse timings.
        """
        kernel = ScratchElementKernel(problem.domain.degrees, problem.approx_degrees, self.mode,
                                      problem.approx_subdivisions)
        bdofs, _ = collocation_layout(problem.domain, problem.dirichlet_faces)
        extraction = {b: ExtractionOperator.for_volume(v) for b, v in enumerate(problem.domain.blocks)}
        return self._assemble(problem, kernel, extraction.__getitem__,
                              lambda b: problem.domain.dof_map.block_maps[b], bdofs, self.key_for(problem).key_hash())

    def assemble_reference_gauss(self, problem: HeatProblem, points: Optional[int] = None) -> GlobalSystem:
        """Same system with tensor Gauss quadrature of the rational integrand, (p+1)^3 points by default"""
        degrees = problem.domain.degrees
        kernel = ElementKernel(degrees, None, None, None, EntryMode.GAUSS, gauss_points=points)
        bdofs, _ = collocation_layout(problem.domain, problem.dirichlet_faces)
        extraction = {b: ExtractionOperator.for_volume(v) for b, v in enumerate(problem.domain.blocks)}
        return self._assemble(problem, kernel, extraction.__getitem__,
                              lambda b: problem.domain.dof_map.block_maps[b], bdofs, "gauss")

    def _assemble(self, problem: HeatProblem, kernel: ElementKernel, extraction_of, dof_map_of,
                  boundary_dofs: np.ndarray, key_hash: str) -> GlobalSystem:
        start = time.perf_counter()
        domain = problem.domain
        jobs: List[_ElementJob] = []
        for b, vol in enumerate(domain.blocks):
            ext = extraction_of(b)
            block_map = dof_map_of(b)
            for bez in extract_bezier(vol, b, ext):
                local = element_local_dofs(vol, ext, bez.element)
                jobs.append(_ElementJob(bez, ext.element_matrix(bez.element), block_map[local]))

        load_points = max(domain.degrees) + 2

        def run(job: _ElementJob) -> _ElementOutput:
            result = kernel.evaluate(job.bezier)
            k = job.operator @ result.stiffness @ job.operator.T
            f = job.operator @ element_load(job.bezier, problem.source, load_points)
            return _ElementOutput(job.dofs, k, f, result.jacobian_min, result.rcond)

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                outputs = list(pool.map(run, jobs))
        else:
            outputs = [run(job) for job in jobs]

        n = domain.n_dofs
        rows, cols, vals = [], [], []
        load = np.zeros(n)
        ill_conditioned = []
        for job, out in zip(jobs, outputs):
            if not self._check_element(job.bezier, out):
                ill_conditioned.append(out.rcond)
            rr, cc = np.meshgrid(out.dofs, out.dofs, indexing='ij')
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(out.stiffness.ravel())
            np.add.at(load, out.dofs, out.load)
        k = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n, n)).tocsr()
        k.sum_duplicates()
        elapsed = time.perf_counter() - start
        logger.info(f"Assembled {len(jobs)} elements, {n} DOFs, nnz {k.nnz} "
                    f"({kernel.mode.value}, {elapsed:.3f}s)")
        if ill_conditioned and key_hash not in self._conditioning_reported:
            self._conditioning_reported.add(key_hash)
            logger.warning(f"Ill-conditioned approximation system on {len(ill_conditioned)} of {len(jobs)} "
                           f"elements (smallest reciprocal condition {min(ill_conditioned):.3e}, "
                           f"structure {key_hash})")
        return GlobalSystem(k, load, domain, np.asarray(boundary_dofs, dtype=np.int64), key_hash, elapsed)

    def _check_element(self, bez: BezierVolume, out: _ElementOutput) -> bool:
        """Events for a degenerate or ill-conditioned element; False when ill-conditioned"""
        if out.jacobian_min <= 0.0:
            detail = f"Jacobian reaches {out.jacobian_min:.3e} on the sample grid"
            logger.warning(f"Degenerate element block {bez.block} element {bez.element}: {detail}")
            self._emit_event(ElementWarningEvent(EventType.ELEMENT_DEGENERATE, bez.block, bez.element, detail))
        if out.rcond < self.rcond_warning:
            detail = f"reciprocal condition {out.rcond:.3e}"
            logger.debug(f"Ill-conditioned approximation system block {bez.block} "
                         f"element {bez.element}: {detail}")
            self._emit_event(ElementWarningEvent(EventType.APPROXIMATION_ILL_CONDITIONED, bez.block,
                                                 bez.element, detail))
            return False
        return True

    def impose_dirichlet(self, system: GlobalSystem, problem: HeatProblem,
                         entry: Optional[CacheEntry] = None) -> ReducedSystem:
        """Boundary control variables by collocation, then elimination of the boundary DOFs"""
        entry = entry or self.prepare(problem)
        before = entry.factorizations
        lu = entry.collocation_lu()
        if entry.factorizations != before:
            self._emit_event(DomainEvent(EventType.COLLOCATION_FACTORIZED, None,
                                         {"key_hash": entry.key_hash, "size": len(entry.boundary_dofs)}))
        bdofs = entry.boundary_dofs
        sites = entry.collocation_sites
        h = problem.dirichlet(site_positions(problem.domain, sites)) if len(bdofs) else np.zeros(0)
        boundary_values = lu.solve(np.asarray(h, dtype=np.float64))
        residual = float(np.max(np.abs(entry.collocation_matrix() @ boundary_values - h))) if len(h) else 0.0
        interior = np.setdiff1d(np.arange(system.n_dofs), bdofs)
        k = system.stiffness.tocsr()
        k_ii = k[interior][:, interior].tocsr()
        k_ib = k[interior][:, bdofs]
        rhs = system.load[interior] - k_ib @ boundary_values
        logger.debug(f"Dirichlet: {len(bdofs)} boundary DOFs, collocation residual {residual:.2e}")
        return ReducedSystem(k_ii, rhs, interior, bdofs, boundary_values, system.domain, residual)

    def solve(self, reduced: ReducedSystem) -> SolutionField:
        field_ = solve(reduced, self.direct_max_dof, self.cg_rtol)
        r = field_.report
        self._emit_event(SolveEvent(len(field_.coefficients), r.method, r.iterations, r.residual))
        return field_

    def run(self, problem: HeatProblem) -> Tuple[GlobalSystem, SolutionField]:
        """Assemble, constrain and solve one problem"""
        entry = self.prepare(problem)
        system = self.assemble(problem, entry)
        reduced = self.impose_dirichlet(system, problem, entry)
        return system, self.solve(reduced)


def site_positions(domain: MultiBlockVolume, sites: np.ndarray) -> np.ndarray:
    """Physical points of (block, u, v, w) sites"""
    out = np.zeros((len(sites), 3))
    for b in np.unique(sites[:, 0]).astype(int):
        mask = sites[:, 0] == b
        out[mask] = domain.blocks[b].evaluate(sites[mask, 1:])
    return out


def element_load(bezier: BezierVolume, source: ScalarField, n_points: int) -> np.ndarray:
    """-int g B J over the element by tensor Gauss quadrature, Bernstein basis"""
    rule = tensor_rule(n_points)
    values, _ = basis_table(bezier.degrees, rule.points)
    _, det = geometry_jacobians(bezier, rule.points)
    g = np.asarray(source(bezier.evaluate(rule.points)), dtype=np.float64)
    return -np.einsum('n,na->a', rule.weights * det * g, values)


def solve(reduced: ReducedSystem, direct_max_dof: int = DIRECT_SOLVER_MAX_DOF,
          rtol: float = CG_RTOL) -> SolutionField:
    """Direct sparse LU below direct_max_dof unknowns, Jacobi-preconditioned CG above"""
    a = reduced.matrix
    b = reduced.load
    n = a.shape[0]
    norm_b = float(np.linalg.norm(b)) or 1.0
    if n == 0:
        x = np.zeros(0)
        report = SolveReport("none", 0, 0.0)
    elif n < direct_max_dof:
        x = sp_la.splu(a.tocsc()).solve(b)
        residual = float(np.linalg.norm(a @ x - b)) / norm_b
        report = SolveReport("direct", 1, residual, [residual])
    else:
        history: List[float] = []

        def record(xk):
            history.append(float(np.linalg.norm(a @ xk - b)) / norm_b)

        diag = a.diagonal()
        precond = sparse.diags(np.where(diag != 0.0, 1.0 / diag, 1.0))
        maxiter = int(10 * np.sqrt(n)) + 1
        x, info = sp_la.cg(a, b, rtol=rtol, maxiter=maxiter, M=precond, callback=record)
        if info != 0:
            raise SolverError(f"CG did not converge in {maxiter} iterations", history)
        residual = float(np.linalg.norm(a @ x - b)) / norm_b
        report = SolveReport("cg", len(history), residual, history)
    coeffs = np.zeros(len(reduced.interior_dofs) + len(reduced.boundary_dofs))
    coeffs[reduced.interior_dofs] = x
    coeffs[reduced.boundary_dofs] = reduced.boundary_values
    logger.info(f"Solved {n} unknowns with {report.method} (residual {report.residual:.2e})")
    return SolutionField(coeffs, reduced.domain, report)


def l2_relative_error(sol: SolutionField, exact: ScalarField, points: Optional[int] = None) -> ErrorNorm:
    """
    sqrt(int (T_h - T)^2 J) / sqrt(int T^2 J) with (p+2)^3 Gauss points per
    element; falls back to the absolute norm when the exact field vanishes
    """
    domain = sol.domain
    n_points = points or max(domain.degrees) + 2
    rule = tensor_rule(n_points)
    values, _ = basis_table(domain.degrees, rule.points)
    err = 0.0
    ref = 0.0
    for b, vol in enumerate(domain.blocks):
        ext = ExtractionOperator.for_volume(vol)
        coeffs = sol.coefficients[domain.dof_map.block_maps[b]]
        for bez in extract_bezier(vol, b, ext):
            local = element_local_dofs(vol, ext, bez.element)
            t_bern = ext.element_matrix(bez.element).T @ coeffs[local]
            _, det = geometry_jacobians(bez, rule.points)
            w = rule.weights * np.abs(det)
            th = values @ t_bern
            t = np.asarray(exact(bez.evaluate(rule.points)), dtype=np.float64)
            err += float(np.sum(w * (th - t) ** 2))
            ref += float(np.sum(w * t ** 2))
    if ref == 0.0:
        return ErrorNorm(float(np.sqrt(err)), False)
    return ErrorNorm(float(np.sqrt(err / ref)), True)
