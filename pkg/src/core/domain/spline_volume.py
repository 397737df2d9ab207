"""
Spline Volumes
Trivariate B-spline volumes, knot insertion and h-refinement, Greville points,
Bezier extraction into per-element Bezier volumes, and conforming multi-block
volumes with a global DOF map.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.interpolate import BSpline

from .bernstein import BernsteinTensor, apply_along_axis, bernstein_basis
from .errors import ConfigurationError, DomainError, FormatError

logger = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-9
FACE_NAMES = ("u0", "u1", "v0", "v1", "w0", "w1")


@dataclass(frozen=True)
class KnotVector:
    """Open (clamped) knot vector on [0, 1]"""
    degree: int
    knots: Tuple[float, ...]

    def __post_init__(self):
        p = int(self.degree)
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, 'degree', p)
        object.__setattr__(self, 'knots', knots)
        if p < 1:
            raise FormatError(f"degree must be >= 1, got {p}")
        u = np.asarray(knots)
        if np.any(np.diff(u) < 0):
            raise FormatError(f"knots must be nondecreasing: {knots}")
        if len(knots) < 2 * (p + 1):
            raise FormatError(f"degree {p} needs at least {2 * (p + 1)} knots, got {len(knots)}")
        if np.any(u[:p + 1] != 0.0) or np.any(u[-(p + 1):] != 1.0):
            raise FormatError(f"knot vector is not clamped on [0, 1] for degree {p}: {knots}")
        if u[p + 1] == 0.0 or u[-(p + 2)] == 1.0:
            raise FormatError(f"end knots repeated more than {p + 1} times: {knots}")
        for value, mult in self.interior_multiplicities():
            if mult > p:
                raise FormatError(f"interior knot {value} has multiplicity {mult} > degree {p}")

    @classmethod
    def uniform(cls, degree: int, n_elements: int = 1) -> "KnotVector":
        interior = [i / n_elements for i in range(1, n_elements)]
        return cls(degree, tuple([0.0] * (degree + 1) + interior + [1.0] * (degree + 1)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots)

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    def interior_multiplicities(self) -> List[Tuple[float, int]]:
        p = self.degree
        interior = self.knots[p + 1:len(self.knots) - p - 1]
        values, counts = np.unique(np.asarray(interior), return_counts=True) if interior else ([], [])
        return [(float(v), int(c)) for v, c in zip(values, counts)]

    def signature(self) -> Tuple:
        """Degree plus interior knots with multiplicities (the reuse-relevant structure)"""
        return (self.degree, tuple(self.interior_multiplicities()))

    def spans(self) -> List[int]:
        """Indices s with knots[s] < knots[s+1], one per element, in parameter order"""
        u = self.knots
        return [s for s in range(self.degree, self.n_basis) if u[s] < u[s + 1]]

    @property
    def n_elements(self) -> int:
        return len(self.spans())

    def basis_matrix(self, t) -> np.ndarray:
        """Dense (len(t), n_basis) matrix of B-spline values (Cox-de Boor via scipy)"""
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=np.float64)), 0.0, 1.0)
        return BSpline.design_matrix(t, self.array, self.degree).toarray()


def greville_points(kv: KnotVector) -> np.ndarray:
    """One abscissa per basis function: the mean of p consecutive interior knots"""
    u = kv.array
    p = kv.degree
    return np.array([u[i + 1:i + p + 1].mean() for i in range(kv.n_basis)])


def insertion_matrix(kv: KnotVector, t: float) -> Tuple[KnotVector, np.ndarray]:
    """Boehm's single knot insertion: new knot vector and T with Q_new = T Q_old"""
    if not (0.0 < t < 1.0):
        raise DomainError(f"can only insert interior knots, got {t}")
    u = kv.array
    p = kv.degree
    n = kv.n_basis
    k = int(np.searchsorted(u, t, side='right')) - 1
    m = np.zeros((n + 1, n))
    for i in range(n + 1):
        if i <= k - p:
            m[i, i] = 1.0
        elif i <= k:
            alpha = (t - u[i]) / (u[i + p] - u[i])
            m[i, i] = alpha
            m[i, i - 1] = 1.0 - alpha
        else:
            m[i, i - 1] = 1.0
    new_knots = tuple(np.insert(u, k + 1, t))
    return KnotVector(p, new_knots), m


def refinement_matrix(kv: KnotVector, new_knots: Sequence[float]) -> Tuple[KnotVector, np.ndarray]:
    """Insert several knots one after another; returns the refined vector and the composed matrix"""
    total = np.eye(kv.n_basis)
    current = kv
    for t in sorted(new_knots):
        current, m = insertion_matrix(current, float(t))
        total = m @ total
    return current, total


def extraction_operators(kv: KnotVector) -> List[np.ndarray]:
    """
    Per-element Bezier extraction operators

    For element e on span s, N_{s-p+r}(t) = sum_c C_e[r, c] B_c(local t).
    Built by raising every interior knot to multiplicity p by knot insertion.
    """
    p = kv.degree
    missing = []
    for value, mult in kv.interior_multiplicities():
        missing.extend([value] * (p - mult))
    _, total = refinement_matrix(kv, missing)
    operators = []
    for e, s in enumerate(kv.spans()):
        rows = total[e * p:e * p + p + 1, s - p:s + 1]
        operators.append(np.ascontiguousarray(rows.T))
    return operators


@dataclass(frozen=True, eq=False)
class BSplineVolume:
    """Trivariate B-spline volume with a (nu, nv, nw, 3) control grid"""
    knot_vectors: Tuple[KnotVector, KnotVector, KnotVector]
    control_points: np.ndarray

    def __post_init__(self):
        kvs = tuple(self.knot_vectors)
        if len(kvs) != 3:
            raise FormatError("a volume needs exactly three knot vectors")
        cp = np.array(self.control_points, dtype=np.float64)
        expected = tuple(kv.n_basis for kv in kvs) + (3,)
        if cp.shape != expected:
            raise FormatError(f"control grid shape {cp.shape} does not match basis counts {expected}")
        cp.setflags(write=False)
        object.__setattr__(self, 'knot_vectors', kvs)
        object.__setattr__(self, 'control_points', cp)

    @classmethod
    def identity(cls, knot_vectors: Sequence[KnotVector]) -> "BSplineVolume":
        """Identity map of the unit cube: control points on the Greville lattice"""
        g = [greville_points(kv) for kv in knot_vectors]
        grid = np.stack(np.meshgrid(*g, indexing='ij'), axis=-1)
        return cls(tuple(knot_vectors), grid)

    @property
    def degrees(self) -> Tuple[int, int, int]:
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(kv.n_basis for kv in self.knot_vectors)

    @property
    def n_dofs(self) -> int:
        return int(np.prod(self.shape))

    def n_elements(self) -> Tuple[int, int, int]:
        return tuple(kv.n_elements for kv in self.knot_vectors)

    def with_control_points(self, control_points: np.ndarray) -> "BSplineVolume":
        return BSplineVolume(self.knot_vectors, control_points)

    def evaluate(self, params: np.ndarray) -> np.ndarray:
        """Geometry at an (N, 3) array of block parameters"""
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        if np.any(params < 0.0) or np.any(params > 1.0):
            raise DomainError("block parameters must lie in [0, 1]^3")
        bu, bv, bw = (kv.basis_matrix(params[:, d]) for d, kv in enumerate(self.knot_vectors))
        return np.einsum('ni,nj,nk,ijkd->nd', bu, bv, bw, self.control_points)


@dataclass(frozen=True, eq=False)
class BezierVolume:
    """One extracted element: Bernstein control grid over the local cube [0,1]^3"""
    control_points: np.ndarray
    block: int = 0
    element: Tuple[int, int, int] = (0, 0, 0)
    sub_box: Tuple[Tuple[float, float], ...] = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        cp = np.array(self.control_points, dtype=np.float64)
        if cp.ndim != 4 or cp.shape[-1] != 3 or min(cp.shape[:3]) < 2:
            raise FormatError(f"Bezier control grid must be (l+1, m+1, n+1, 3), got {cp.shape}")
        cp.setflags(write=False)
        object.__setattr__(self, 'control_points', cp)
        object.__setattr__(self, 'element', tuple(int(e) for e in self.element))
        object.__setattr__(self, 'sub_box', tuple(tuple(float(x) for x in b) for b in self.sub_box))

    @property
    def degrees(self) -> Tuple[int, int, int]:
        return tuple(s - 1 for s in self.control_points.shape[:3])

    def coordinate(self, d: int) -> BernsteinTensor:
        return BernsteinTensor(self.degrees, self.control_points[..., d])

    def evaluate(self, local: np.ndarray) -> np.ndarray:
        """Geometry at an (N, 3) array of local parameters"""
        local = np.atleast_2d(np.asarray(local, dtype=np.float64))
        l, m, n = self.degrees
        bu = bernstein_basis(l, local[:, 0])
        bv = bernstein_basis(m, local[:, 1])
        bw = bernstein_basis(n, local[:, 2])
        return np.einsum('ni,nj,nk,ijkd->nd', bu, bv, bw, self.control_points)

    def to_block(self, local: np.ndarray) -> np.ndarray:
        """Map local parameters to the parent block's parameters"""
        local = np.atleast_2d(np.asarray(local, dtype=np.float64))
        lo = np.array([b[0] for b in self.sub_box])
        hi = np.array([b[1] for b in self.sub_box])
        return lo + local * (hi - lo)


@dataclass(frozen=True, eq=False)
class ExtractionOperator:
    """Per-direction stacks of element operators, shape (n_el, p+1, p+1) each"""
    operators: Tuple[np.ndarray, np.ndarray, np.ndarray]
    spans: Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]

    @classmethod
    def for_volume(cls, volume: BSplineVolume) -> "ExtractionOperator":
        ops = tuple(np.stack(extraction_operators(kv)) for kv in volume.knot_vectors)
        spans = tuple(tuple(kv.spans()) for kv in volume.knot_vectors)
        return cls(ops, spans)

    def element_matrix(self, element: Tuple[int, int, int]) -> np.ndarray:
        """Kronecker operator C_u (x) C_v (x) C_w for one element (C-order local indices)"""
        cu, cv, cw = (self.operators[d][element[d]] for d in range(3))
        return np.kron(cu, np.kron(cv, cw))

    def elements(self) -> List[Tuple[int, int, int]]:
        nu, nv, nw = (len(s) for s in self.spans)
        return [(i, j, k) for i in range(nu) for j in range(nv) for k in range(nw)]


def element_local_dofs(volume: BSplineVolume, extraction: ExtractionOperator,
                       element: Tuple[int, int, int]) -> np.ndarray:
    """Block-local flat (C-order) indices of the basis functions living on an element"""
    ranges = []
    for d in range(3):
        s = extraction.spans[d][element[d]]
        p = volume.degrees[d]
        ranges.append(np.arange(s - p, s + 1))
    grid = np.meshgrid(*ranges, indexing='ij')
    return np.ravel_multi_index(tuple(g.ravel() for g in grid), volume.shape)


def extract_bezier(volume: BSplineVolume, block: int = 0,
                   extraction: Optional[ExtractionOperator] = None) -> List[BezierVolume]:
    """One BezierVolume per tensor-product element, in C order over (e_u, e_v, e_w)"""
    extraction = extraction or ExtractionOperator.for_volume(volume)
    result = []
    for element in extraction.elements():
        q = volume.control_points
        for d in range(3):
            s = extraction.spans[d][element[d]]
            p = volume.degrees[d]
            q = np.take(q, np.arange(s - p, s + 1), axis=d)
        for d in range(3):
            q = apply_along_axis(q, extraction.operators[d][element[d]].T, d)
        sub_box = tuple(
            (volume.knot_vectors[d].knots[extraction.spans[d][element[d]]],
             volume.knot_vectors[d].knots[extraction.spans[d][element[d]] + 1])
            for d in range(3)
        )
        result.append(BezierVolume(q, block=block, element=element, sub_box=sub_box))
    return result


def h_refine(volume: BSplineVolume, levels: int) -> BSplineVolume:
    """Bisect every nonzero span `levels` times per direction; geometry is unchanged"""
    if levels < 0:
        raise DomainError(f"refinement levels must be >= 0, got {levels}")
    kvs = list(volume.knot_vectors)
    q = volume.control_points
    for _ in range(levels):
        for d in range(3):
            u = kvs[d].knots
            mids = [0.5 * (u[s] + u[s + 1]) for s in kvs[d].spans()]
            kvs[d], m = refinement_matrix(kvs[d], mids)
            q = apply_along_axis(q, m, d)
    return BSplineVolume(tuple(kvs), q)


def face_grid(shape: Tuple[int, int, int], face: int) -> np.ndarray:
    """2D array of block-local flat indices on one face"""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    axis, side = divmod(face, 2)
    return np.take(idx, -1 if side else 0, axis=axis)


def orient(grid: np.ndarray, code: int) -> np.ndarray:
    """Reorder a face grid: bit 0 swaps axes, bit 1 flips the first, bit 2 flips the second"""
    g = grid.T if code & 1 else grid
    if code & 2:
        g = g[::-1, :]
    if code & 4:
        g = g[:, ::-1]
    return g


@dataclass(frozen=True)
class Interface:
    """Conforming contact between face a of one block and face b of another (orientation None: detect)"""
    a: Tuple[int, int]
    b: Tuple[int, int]
    orientation: Optional[int] = 0


def detect_orientation(volume_a: BSplineVolume, face_a: int, volume_b: BSplineVolume, face_b: int,
                       tol: float = MERGE_TOLERANCE) -> int:
    """First orientation code under which the two faces' control points coincide"""
    pa = volume_a.control_points.reshape(-1, 3)[face_grid(volume_a.shape, face_a)]
    for code in range(8):
        gb = orient(face_grid(volume_b.shape, face_b), code)
        if gb.shape != pa.shape[:2]:
            continue
        pb = volume_b.control_points.reshape(-1, 3)[gb]
        if np.max(np.abs(pa - pb)) <= tol:
            return code
    raise ConfigurationError(f"faces {FACE_NAMES[face_a]} and {FACE_NAMES[face_b]} are not conforming")


@dataclass(frozen=True, eq=False)
class DofMap:
    """(block, local flat index) -> global index"""
    block_maps: Tuple[np.ndarray, ...]
    n_global: int

    def global_index(self, block: int, local: np.ndarray) -> np.ndarray:
        return self.block_maps[block][local]

    def owner(self, g: int) -> Tuple[int, int]:
        """First (block, local) that maps to global index g"""
        for b, bm in enumerate(self.block_maps):
            hits = np.nonzero(bm == g)[0]
            if hits.size:
                return b, int(hits[0])
        raise DomainError(f"global index {g} out of range")

    def remap(self, block: int, local: np.ndarray) -> np.ndarray:
        """Global index of the owner of each (block, local); equals global_index"""
        out = []
        for g in np.atleast_1d(self.global_index(block, local)):
            b, loc = self.owner(int(g))
            out.append(self.block_maps[b][loc])
        return np.asarray(out, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class MultiBlockVolume:
    """Connected B-spline blocks with declared conforming interfaces"""
    blocks: Tuple[BSplineVolume, ...]
    interfaces: Tuple[Interface, ...] = ()
    merge_tolerance: float = MERGE_TOLERANCE
    dof_map: DofMap = field(init=False)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise FormatError("a model needs at least one block")
        degrees = {b.degrees for b in blocks}
        if len(degrees) != 1:
            raise ConfigurationError(f"all blocks must share degrees, got {sorted(degrees)}")
        resolved = []
        used = set()
        for itf in self.interfaces:
            a, b = (tuple(int(x) for x in itf.a), tuple(int(x) for x in itf.b))
            for blk, face in (a, b):
                if not (0 <= blk < len(blocks)) or not (0 <= face < 6):
                    raise ConfigurationError(f"interface refers to missing block/face {(blk, face)}")
                if (blk, face) in used:
                    raise ConfigurationError(f"face {(blk, FACE_NAMES[face])} used by two interfaces")
                used.add((blk, face))
            code = itf.orientation
            if code is None:
                code = detect_orientation(blocks[a[0]], a[1], blocks[b[0]], b[1], self.merge_tolerance)
            resolved.append(Interface(a, b, int(code)))
        object.__setattr__(self, 'blocks', blocks)
        object.__setattr__(self, 'interfaces', tuple(resolved))
        object.__setattr__(self, 'dof_map', self._build_dof_map())

    @property
    def degrees(self) -> Tuple[int, int, int]:
        return self.blocks[0].degrees

    @property
    def n_dofs(self) -> int:
        return self.dof_map.n_global

    def _build_dof_map(self) -> DofMap:
        sizes = [b.n_dofs for b in self.blocks]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        parent = np.arange(offsets[-1])

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for itf in self.interfaces:
            (ba, fa), (bb, fb) = itf.a, itf.b
            va, vb = self.blocks[ba], self.blocks[bb]
            ga = face_grid(va.shape, fa)
            gb = orient(face_grid(vb.shape, fb), itf.orientation)
            if ga.shape != gb.shape:
                raise ConfigurationError(
                    f"interface {itf}: face grids {ga.shape} and {gb.shape} do not match"
                )
            pa = va.control_points.reshape(-1, 3)[ga]
            pb = vb.control_points.reshape(-1, 3)[gb]
            gap = float(np.max(np.abs(pa - pb)))
            if gap > self.merge_tolerance:
                raise ConfigurationError(
                    f"interface {itf} is not conforming: control points differ by {gap:.3e}"
                )
            for i, j in zip((offsets[ba] + ga).ravel(), (offsets[bb] + gb).ravel()):
                ri, rj = find(int(i)), find(int(j))
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

        roots = np.array([find(i) for i in range(offsets[-1])], dtype=np.int64)
        numbering: Dict[int, int] = {}
        for r in roots:
            if int(r) not in numbering:
                numbering[int(r)] = len(numbering)
        glob = np.array([numbering[int(r)] for r in roots], dtype=np.int64)
        block_maps = tuple(glob[offsets[b]:offsets[b + 1]] for b in range(len(self.blocks)))
        for bm in block_maps:
            bm.setflags(write=False)
        merged = int(offsets[-1]) - len(numbering)
        logger.debug(f"DOF map: {offsets[-1]} block DOFs, {merged} merged, {len(numbering)} global")
        return DofMap(block_maps, len(numbering))

    def exterior_faces(self) -> List[Tuple[int, int]]:
        interior = {itf.a for itf in self.interfaces} | {itf.b for itf in self.interfaces}
        return [(b, f) for b in range(len(self.blocks)) for f in range(6) if (b, f) not in interior]

    def with_blocks(self, blocks: Sequence[BSplineVolume]) -> "MultiBlockVolume":
        """Same topology, new geometry"""
        return MultiBlockVolume(tuple(blocks), self.interfaces, self.merge_tolerance)

    def snap_interfaces(self) -> "MultiBlockVolume":
        """Average paired interface control points so that nearly conforming fits become conforming"""
        grids = [b.control_points.reshape(-1, 3).copy() for b in self.blocks]
        pairs = []
        for itf in self.interfaces:
            (ba, fa), (bb, fb) = itf.a, itf.b
            ga = face_grid(self.blocks[ba].shape, fa).ravel()
            gb = orient(face_grid(self.blocks[bb].shape, fb), itf.orientation).ravel()
            pairs.append((ba, ga, bb, gb))
        # union of all coincident slots, keyed by the first slot
        slot_root: Dict[Tuple[int, int], Tuple[int, int]] = {}

        def root(s):
            while slot_root.get(s, s) != s:
                s = slot_root[s]
            return s

        for ba, ga, bb, gb in pairs:
            for i, j in zip(ga, gb):
                ra, rb = root((ba, int(i))), root((bb, int(j)))
                if ra != rb:
                    slot_root[max(ra, rb)] = min(ra, rb)
        members: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
        for ba, ga, bb, gb in pairs:
            for s in [(ba, int(i)) for i in ga] + [(bb, int(j)) for j in gb]:
                members.setdefault(root(s), [])
                if s not in members[root(s)]:
                    members[root(s)].append(s)
        for slots in members.values():
            mean = np.mean([grids[b][i] for b, i in slots], axis=0)
            for b, i in slots:
                grids[b][i] = mean
        blocks = [blk.with_control_points(g.reshape(blk.control_points.shape))
                  for blk, g in zip(self.blocks, grids)]
        return MultiBlockVolume(tuple(blocks), self.interfaces, self.merge_tolerance)

    def face_parameters(self, block: int, face: int, local: np.ndarray) -> np.ndarray:
        """Block parameters on a face: local is (N, 2) in the face's own (s, t)"""
        local = np.atleast_2d(local)
        axis, side = divmod(face, 2)
        out = np.zeros((local.shape[0], 3))
        free = [d for d in range(3) if d != axis]
        out[:, axis] = float(side)
        out[:, free[0]] = local[:, 0]
        out[:, free[1]] = local[:, 1]
        return out
