"""
Tests for the command-line front end, the application layer and the JSON adapter
"""
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.adapters.input.json_model_adapter import JsonModelAdapter, model_document
from src.app.application import (
    BENCH_MIN_ACCELERATION, SPHERE_SOLUTION, VERIFY_GAUSS_AGREEMENT, VERIFY_SPHERE_FACTOR, IgaApplication,
    manufactured_problem,
)
from src.app.config import Settings
from src.app.main import EXIT_INPUT, EXIT_OK, main
from src.core.domain import model_catalogue
from src.core.domain.errors import FormatError
from src.core.domain.expression import parse


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def cli(tmp_path, *args):
    return main(["--log-file", "", "--cache-dir", str(tmp_path / "cache"), *args])


@pytest.fixture
def cube_problem(tmp_path):
    return write_json(tmp_path / "cube.json", {
        "model": "builtin:unit_cube",
        "degree": 2,
        "elements": 2,
        "source": "-3*pi^2*sin(pi*x)*sin(pi*y)*sin(pi*z)",
        "dirichlet": {"faces": "all", "value": 0},
        "exact": "sin(pi*x)*sin(pi*y)*sin(pi*z)",
    })


def test_solve_writes_reproducible_csv(tmp_path, cube_problem, capsys):
    assert cli(tmp_path, "solve", cube_problem, "-o", str(tmp_path / "a")) == EXIT_OK
    assert cli(tmp_path, "solve", cube_problem, "-o", str(tmp_path / "b")) == EXIT_OK
    first = (tmp_path / "a.csv").read_bytes()
    assert first == (tmp_path / "b.csv").read_bytes()
    assert first.startswith(b"x,y,z,T\n")
    out = capsys.readouterr().out
    assert "L2 error" in out


def test_solve_with_vtk_export(tmp_path, cube_problem):
    assert cli(tmp_path, "--no-cache", "solve", cube_problem, "-o", str(tmp_path / "out"), "--vtk") == EXIT_OK
    assert (tmp_path / "out_block0.vtk").exists()


def test_missing_problem_file_is_an_input_error(tmp_path, capsys):
    missing = str(tmp_path / "nowhere.json")
    assert cli(tmp_path, "solve", missing) == EXIT_INPUT
    assert missing in capsys.readouterr().err


def test_malformed_expression_is_an_input_error(tmp_path, capsys):
    problem = write_json(tmp_path / "bad.json", {
        "model": "builtin:unit_cube",
        "source": "sin(x",
        "dirichlet": {"faces": "all", "value": 0},
    })
    assert cli(tmp_path, "solve", problem) == EXIT_INPUT
    assert "#/source" in capsys.readouterr().err


def test_cache_stats_and_clear(tmp_path, cube_problem, capsys):
    assert cli(tmp_path, "solve", cube_problem) == EXIT_OK
    capsys.readouterr()
    assert cli(tmp_path, "cache", "stats") == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert len(report["entries"]) == 1
    assert report["entries"][0]["total_nnz"] > 0
    assert cli(tmp_path, "cache", "clear") == EXIT_OK
    assert "removed 2 cache file(s)" in capsys.readouterr().out
    assert not any((tmp_path / "cache").iterdir())


def test_extract_lists_bezier_elements(tmp_path):
    out = tmp_path / "elements.json"
    assert cli(tmp_path, "extract", "builtin:curved_two_block", "-o", str(out)) == EXIT_OK
    elements = json.loads(out.read_text(encoding="utf-8"))["elements"]
    assert {e["block"] for e in elements} == {0, 1}
    for e in elements:
        p, q, r = e["degrees"]
        assert len(e["control_points"]) == (p + 1) * (q + 1) * (r + 1)


def test_fit_from_sample_file(tmp_path):
    grid = np.linspace(0.0, 1.0, 4)
    samples = []
    for w in grid:
        for v in grid:
            for u in grid:
                on_boundary = any(t in (0.0, 1.0) for t in (u, v, w))
                samples.append({"uvw": [u, v, w], "xyz": [2 * u + 1, v, 0.5 * w + 0.1 * u],
                                "kind": "boundary" if on_boundary else "interior"})
    path = write_json(tmp_path / "samples.json", {"degrees": 1, "elements": 1, "samples": samples})
    out = tmp_path / "fitted.json"
    assert cli(tmp_path, "fit", path, "-o", str(out), "--smoothing", "0") == EXIT_OK
    model = JsonModelAdapter().read_model(str(out))
    assert model.n_dofs == 8
    corner = model.blocks[0].evaluate(np.array([[1.0, 1.0, 1.0]]))[0]
    assert_allclose(corner, [3.0, 1.0, 0.6], atol=1e-9)


def test_reuse_shares_one_cache_entry(tmp_path):
    base = model_catalogue.unit_cube(degree=2, elements=2)
    models = []
    for i, member in enumerate(model_catalogue.deformed_family(base, 2, seed=4, amplitude=0.02)):
        models.append(write_json(tmp_path / f"member{i}.json", model_document(member)))
    problem = write_json(tmp_path / "problem.json", {
        "model": models[0],
        "dirichlet": {"faces": "all", "value": "x + y"},
    })
    app = IgaApplication(Settings(cache_dir=str(tmp_path / "cache"), log_file=""), persistent_cache=False)
    report = app.reuse(problem, models[1:], str(tmp_path / "report.json"), repeats=1)
    assert [m.checksum_match for m in report.models] == [True, True]
    assert app.cache.builder_calls == 7
    assert report.cache_nnz > 0
    saved = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert len(saved["models"]) == 2


def test_problem_fields_are_located_by_pointer(tmp_path):
    adapter = JsonModelAdapter()
    path = write_json(tmp_path / "p.json", {
        "model": "builtin:unit_cube",
        "dirichlet": {"faces": ["top"], "value": 0},
    })
    with pytest.raises(FormatError) as info:
        adapter.read_problem(path)
    assert info.value.pointer == "/dirichlet/faces/0"
    assert str(info.value).startswith(f"{path}#/dirichlet/faces/0")


def test_unknown_builtin_model(tmp_path):
    path = write_json(tmp_path / "p.json", {"model": "builtin:teapot", "dirichlet": {}})
    with pytest.raises(FormatError) as info:
        JsonModelAdapter().read_problem(path)
    assert info.value.pointer == "/model"


def test_control_point_count_is_checked(tmp_path):
    doc = model_document(model_catalogue.unit_cube(degree=1))
    doc["blocks"][0]["control_points"].pop()
    path = write_json(tmp_path / "m.json", doc)
    with pytest.raises(FormatError) as info:
        JsonModelAdapter().read_model(path)
    assert info.value.pointer == "/blocks/0/control_points"


def test_model_document_reads_back(tmp_path):
    model = model_catalogue.curved_two_block(degree=2, elements=1)
    path = write_json(tmp_path / "m.json", model_document(model))
    again = JsonModelAdapter().read_model(path)
    assert again.n_dofs == model.n_dofs
    for a, b in zip(again.blocks, model.blocks):
        assert_allclose(a.control_points, b.control_points)


@pytest.mark.slow
def test_verify_suite_passes(tmp_path, capsys):
    assert cli(tmp_path, "--no-cache", "verify", "--skip-sphere") == EXIT_OK
    assert "verify: PASS" in capsys.readouterr().out


@pytest.mark.slow
def test_hollow_sphere_error_agrees_with_gauss(tmp_path):
    app = IgaApplication(Settings(cache_dir=str(tmp_path / "cache"), log_file=""), persistent_cache=False)
    problem = manufactured_problem(model_catalogue.hollow_sphere_octant(3), parse(SPHERE_SOLUTION))
    quad_free, gauss, dofs = app._both_errors(problem)
    assert dofs == 148
    assert abs(quad_free - gauss) <= VERIFY_GAUSS_AGREEMENT * max(quad_free, gauss)
    assert quad_free <= VERIFY_SPHERE_FACTOR * gauss


@pytest.mark.bench
def test_bench_report(tmp_path):
    report = tmp_path / "bench.json"
    assert cli(tmp_path, "--no-cache", "bench", "--degree", "3", "--levels", "1", "2",
               "--repeats", "1", "--report", str(report)) == EXIT_OK
    saved = json.loads(report.read_text(encoding="utf-8"))
    assert [m["checksum_match"] for m in saved["models"]] == [True, True]
    assert all(m["acceleration_ratio"] >= BENCH_MIN_ACCELERATION for m in saved["models"])
