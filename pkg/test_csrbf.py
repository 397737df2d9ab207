"""
Tests for the Wendland elastic map and B-spline solid fitting
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.domain import model_catalogue
from src.core.domain.csrbf import (
    SampleSet, complete_samples, fit_bspline_solid, fit_elastic_map, greville_samples, map_points,
    produce_consistent_model, wendland,
)
from src.core.domain.errors import DomainError, FitError, FormatError
from src.core.domain.polynomial_approx import ApproxDegrees
from src.core.domain.reuse_cache import CacheKey
from src.core.domain.spline_volume import BSplineVolume, KnotVector

A = np.array([[1.1, 0.1, 0.0], [-0.05, 0.9, 0.2], [0.0, 0.1, 1.3]])
T = np.array([0.5, -1.0, 2.0])


def affine(p):
    return np.asarray(p) @ A.T + T


def bulge(p):
    p = np.asarray(p, dtype=np.float64)
    out = p.copy()
    out[:, 2] += 0.1 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    return out


def test_wendland_values():
    assert wendland(0.0) == 3.0
    assert wendland(0.5) == pytest.approx(0.32421875)
    assert_allclose(wendland(np.array([1.0, 1.5, 7.0])), 0.0)


def test_wendland_rejects_negative_radius():
    with pytest.raises(DomainError):
        wendland(-0.1)


def test_affine_targets_give_zero_kernel_weights(rng):
    v = rng.uniform(0.0, 1.0, size=(40, 3))
    m = fit_elastic_map(v, affine(v), support=0.5)
    assert_allclose(m.weights, 0.0, atol=1e-10)
    assert_allclose(m.linear, A, atol=1e-10)
    pts = rng.uniform(0.0, 1.0, size=(20, 3))
    assert_allclose(m(pts), affine(pts), atol=1e-10)


def test_elastic_map_interpolates_constraints(rng):
    v = rng.uniform(0.0, 1.0, size=(60, 3))
    targets = bulge(v)
    m = fit_elastic_map(v, targets)
    assert_allclose(m(v), targets, atol=1e-9)
    assert_allclose(map_points(m, v), m(v))


def test_kernel_has_compact_support(rng):
    v = rng.uniform(0.0, 1.0, size=(30, 3))
    m = fit_elastic_map(v, bulge(v), support=0.3)
    far = np.array([[5.0, 5.0, 5.0]])
    assert_allclose(m(far), m.affine(far))


def test_duplicate_centers_are_reported():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    with pytest.raises(FitError) as info:
        fit_elastic_map(v, v)
    assert info.value.offending_centers == [1, 4]


def test_coplanar_centers_are_rejected(rng):
    v = np.column_stack([rng.uniform(size=(10, 2)), np.zeros(10)])
    with pytest.raises(FitError):
        fit_elastic_map(v, v)


def test_too_few_centers():
    v = np.eye(3)
    with pytest.raises(FitError):
        fit_elastic_map(v, v)


def test_fit_recovers_generating_volume(rng):
    kvs = (KnotVector.uniform(2, 2), KnotVector.uniform(2, 1), KnotVector.uniform(3, 1))
    generator = BSplineVolume.identity(kvs)
    generator = generator.with_control_points(generator.control_points
                                              + 0.05 * rng.standard_normal(generator.control_points.shape))
    params = rng.uniform(0.0, 1.0, size=(400, 3))
    samples = SampleSet(0, params, generator.evaluate(params), np.zeros(len(params), dtype=bool))
    fitted = fit_bspline_solid(samples, kvs, smoothing=0.0)
    assert_allclose(fitted.control_points, generator.control_points, atol=1e-9)


def test_smoothing_keeps_fit_close(rng):
    kvs = tuple(KnotVector.uniform(2, 2) for _ in range(3))
    params = rng.uniform(0.0, 1.0, size=(300, 3))
    samples = SampleSet(0, params, bulge(params), np.zeros(len(params), dtype=bool))
    fitted = fit_bspline_solid(samples, kvs, smoothing=1e-6)
    assert np.max(np.abs(fitted.evaluate(params) - bulge(params))) < 1e-2


def test_rank_deficient_fit():
    kvs = tuple(KnotVector.uniform(2, 2) for _ in range(3))
    params = np.random.default_rng(7).uniform(0.0, 0.2, size=(50, 3))
    samples = SampleSet(0, params, params, np.zeros(len(params), dtype=bool))
    with pytest.raises(FitError) as info:
        fit_bspline_solid(samples, kvs, smoothing=0.0)
    assert info.value.null_space > 0


def test_sample_parameters_are_validated():
    with pytest.raises(FormatError):
        SampleSet(0, [[0.5, 1.2, 0.0]], [[0.0, 0.0, 0.0]], [False])
    with pytest.raises(FormatError):
        SampleSet(0, [[0.5, 0.5, 0.0]], [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], [False])


def test_template_only_samples_are_completed():
    vol = BSplineVolume.identity(tuple(KnotVector.uniform(2, 1) for _ in range(3)))
    params, on_boundary = greville_samples(vol, range(6))
    template = vol.evaluate(params)
    positions = np.where(on_boundary[:, None], affine(template), np.nan)
    (completed,) = complete_samples([SampleSet(0, params, positions, on_boundary, template)])
    assert not completed.missing().any()
    assert_allclose(completed.positions, affine(template), atol=1e-9)


def test_missing_positions_without_template():
    s = SampleSet(0, [[0.5, 0.5, 0.5]] * 5, [[np.nan] * 3] * 5, [False] * 5)
    with pytest.raises(FitError):
        complete_samples([s])
    with pytest.raises(FormatError):
        fit_bspline_solid(s, tuple(KnotVector.uniform(1, 1) for _ in range(3)))


def test_consistent_model_keeps_structure_and_key():
    template = model_catalogue.curved_two_block(degree=2, elements=1)
    produced = produce_consistent_model(template, bulge)
    approx = ApproxDegrees.default(template.degrees)
    assert CacheKey.for_model(produced, approx) == CacheKey.for_model(template, approx)
    assert produced.n_dofs == template.n_dofs
    for b, block in enumerate(template.blocks):
        faces = [f for blk, f in template.exterior_faces() if blk == b]
        params, on_boundary = greville_samples(block, faces)
        expected = bulge(block.evaluate(params[on_boundary]))
        assert_allclose(produced.blocks[b].evaluate(params[on_boundary]), expected, atol=1e-9)


def test_consistent_model_of_affine_boundary_is_affine():
    template = model_catalogue.unit_cube(degree=2, elements=2)
    produced = produce_consistent_model(template, affine)
    assert_allclose(produced.blocks[0].control_points, affine(template.blocks[0].control_points), atol=1e-9)
