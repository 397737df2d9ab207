"""
Model Catalogue
Built-in domains for verification, benchmarks and examples.
"""
from typing import Callable, Dict, Iterator, Optional, Sequence
import logging

import numpy as np

from .bernstein import apply_along_axis
from .errors import ConfigurationError
from .spline_volume import BSplineVolume, Interface, KnotVector, MultiBlockVolume, greville_points, h_refine

logger = logging.getLogger(__name__)

SPHERE_CENTER_RADIUS = 10.0
SPHERE_HALF_THICKNESS = 1.0

Mapping3 = Callable[[np.ndarray], np.ndarray]


def interpolate_volume(mapping: Mapping3, knot_vectors: Sequence[KnotVector]) -> BSplineVolume:
    """B-spline volume interpolating mapping(u, v, w) at the Greville lattice"""
    g = [greville_points(kv) for kv in knot_vectors]
    params = np.stack(np.meshgrid(*g, indexing='ij'), axis=-1)
    targets = np.asarray(mapping(params.reshape(-1, 3)), dtype=np.float64).reshape(params.shape)
    q = targets
    for d, kv in enumerate(knot_vectors):
        q = apply_along_axis(q, np.linalg.inv(kv.basis_matrix(g[d])), d)
    return BSplineVolume(tuple(knot_vectors), q)


def _uniform(degree: int, elements: int):
    return tuple(KnotVector.uniform(degree, elements) for _ in range(3))


def unit_cube(degree: int = 1, elements: int = 1) -> MultiBlockVolume:
    """Identity map of [0,1]^3"""
    return MultiBlockVolume((BSplineVolume.identity(_uniform(degree, elements)),))


def box(lengths: Sequence[float], degree: int = 1, elements: int = 1) -> MultiBlockVolume:
    vol = BSplineVolume.identity(_uniform(degree, elements))
    return MultiBlockVolume((vol.with_control_points(vol.control_points * np.asarray(lengths)),))


def slab(degree: int = 3, elements: int = 2, thickness: float = 0.1) -> MultiBlockVolume:
    """[0,1]^2 x [0, thickness], one element through the thickness"""
    kvs = (KnotVector.uniform(degree, elements), KnotVector.uniform(degree, elements),
           KnotVector.uniform(degree, 1))
    vol = BSplineVolume.identity(kvs)
    return MultiBlockVolume((vol.with_control_points(vol.control_points * np.array([1.0, 1.0, thickness])),))


def _octant_patch(k: int) -> Mapping3:
    """Block k of the shell octant: spherical quad around axis k, radius 9 + 2w"""
    e = np.eye(3)
    a, b, c = k, (k + 1) % 3, (k + 2) % 3
    corners = np.array([
        e[a],
        (e[a] + e[b]) / np.sqrt(2.0),
        np.ones(3) / np.sqrt(3.0),
        (e[a] + e[c]) / np.sqrt(2.0),
    ])

    def mapping(uvw: np.ndarray) -> np.ndarray:
        s, t, w = uvw[:, 0:1], uvw[:, 1:2], uvw[:, 2:3]
        p = ((1 - s) * (1 - t) * corners[0] + s * (1 - t) * corners[1]
             + s * t * corners[2] + (1 - s) * t * corners[3])
        p = p / np.linalg.norm(p, axis=1, keepdims=True)
        radius = SPHERE_CENTER_RADIUS - SPHERE_HALF_THICKNESS + 2.0 * SPHERE_HALF_THICKNESS * w
        return radius * p

    return mapping


def hollow_sphere_octant(degree: int = 3, elements: int = 1) -> MultiBlockVolume:
    """
    First octant of the shell 9 <= |x| <= 11 as three conforming blocks

    Faces u0 and v0 of each block lie on coordinate planes, w0 and w1 on the
    inner and outer sphere; u1 / v1 are interfaces.
    """
    kvs = _uniform(degree, elements)
    blocks = tuple(interpolate_volume(_octant_patch(k), kvs) for k in range(3))
    interfaces = (Interface((0, 1), (1, 3), None), Interface((1, 1), (2, 3), None),
                  Interface((2, 1), (0, 3), None))
    return MultiBlockVolume(blocks, interfaces, merge_tolerance=1e-8)


def _bend(p: np.ndarray, amplitude: float) -> np.ndarray:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    out = p.copy()
    out[:, 0] += amplitude * np.sin(np.pi * y) * np.sin(np.pi * z)
    out[:, 1] += amplitude * np.sin(0.5 * np.pi * x) * z
    out[:, 2] += 0.5 * amplitude * np.sin(0.5 * np.pi * x) * np.sin(np.pi * y)
    return out


def curved_two_block(degree: int = 2, elements: int = 1, amplitude: float = 0.1) -> MultiBlockVolume:
    """[0,2] x [0,1]^2 bent smoothly and split at x = 1 along a curved interface"""
    kvs = _uniform(degree, elements)
    blocks = tuple(
        interpolate_volume(lambda uvw, o=offset: _bend(uvw + np.array([o, 0.0, 0.0]), amplitude), kvs)
        for offset in (0.0, 1.0)
    )
    return MultiBlockVolume(blocks, (Interface((0, 1), (1, 0), None),), merge_tolerance=1e-8)


def deform(model: MultiBlockVolume, seed: int, amplitude: float = 0.05) -> MultiBlockVolume:
    """Smooth random displacement of every control point; coincident points stay coincident"""
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.5, 1.5, size=(3, 3))
    phase = rng.uniform(0.0, 2 * np.pi, size=3)
    lo = np.min([b.control_points.reshape(-1, 3).min(axis=0) for b in model.blocks], axis=0)
    hi = np.max([b.control_points.reshape(-1, 3).max(axis=0) for b in model.blocks], axis=0)
    scale = float(np.linalg.norm(hi - lo))

    def displace(p: np.ndarray) -> np.ndarray:
        q = (p - lo) / scale
        return p + amplitude * scale * np.sin(q @ freq * np.pi + phase)

    blocks = [b.with_control_points(displace(b.control_points.reshape(-1, 3)).reshape(b.control_points.shape))
              for b in model.blocks]
    return model.with_blocks(blocks)


def deformed_family(model: MultiBlockVolume, count: int, seed: int = 0,
                    amplitude: float = 0.05) -> Iterator[MultiBlockVolume]:
    """Structurally identical, geometrically different members"""
    for i in range(count):
        yield deform(model, seed + i, amplitude)


def refine(model: MultiBlockVolume, levels: int) -> MultiBlockVolume:
    if levels == 0:
        return model
    return MultiBlockVolume(tuple(h_refine(b, levels) for b in model.blocks), model.interfaces,
                            model.merge_tolerance)


CATALOGUE: Dict[str, Callable[..., MultiBlockVolume]] = {
    "unit_cube": unit_cube,
    "slab": slab,
    "hollow_sphere": hollow_sphere_octant,
    "curved_two_block": curved_two_block,
}


def builtin(name: str, degree: Optional[int] = None, elements: Optional[int] = None) -> MultiBlockVolume:
    """Catalogue model by name"""
    if name not in CATALOGUE:
        raise ConfigurationError(f"unknown built-in model {name!r}; choose from {sorted(CATALOGUE)}")
    kwargs = {}
    if degree is not None:
        kwargs["degree"] = degree
    if elements is not None:
        kwargs["elements"] = elements
    return CATALOGUE[name](**kwargs)
