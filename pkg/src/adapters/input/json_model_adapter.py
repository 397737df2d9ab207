"""
JSON Model Adapter - Reads models, problems and sample sets from JSON files
Implements ModelSourcePort

Control points are listed with the first parameter index varying fastest.
Faces are written as names (u0, u1, v0, v1, w0, w1) or indices 0..5.
"""
import json
import logging
from pathlib import Path
from typing import Any, List, Optional

import numpy as np

from src.core.domain.assembly import HeatProblem
from src.core.domain.csrbf import SampleSet
from src.core.domain.errors import FormatError, IgaError
from src.core.domain.expression import as_field
from src.core.domain.model_catalogue import builtin, refine
from src.core.domain.spline_volume import MERGE_TOLERANCE, FACE_NAMES, BSplineVolume, Interface, KnotVector, MultiBlockVolume
from src.core.ports.model_port import ModelSourcePort

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"


class JsonModelAdapter(ModelSourcePort):
    """
    JSON file reader/writer for the solver's inputs

    Every malformed value is reported as a FormatError carrying the file path
    and a JSON pointer to the offending value.
    """

    def __init__(self, base_dir: Optional[str] = None, merge_tolerance: float = MERGE_TOLERANCE):
        self.base_dir = Path(base_dir) if base_dir else None
        self.merge_tolerance = merge_tolerance

    def _resolve(self, path: str, relative_to: Optional[Path] = None) -> Path:
        p = Path(path)
        if not p.is_absolute():
            anchor = relative_to if relative_to is not None else self.base_dir
            if anchor is not None:
                p = anchor / p
        return p

    def _load(self, path: Path) -> Any:
        if not path.exists():
            raise FormatError("file not found", str(path))
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}", str(path))
        except OSError as e:
            raise FormatError(f"cannot read file: {e}", str(path))

    # ---- models ---------------------------------------------------------

    def read_model(self, path: str) -> MultiBlockVolume:
        if path.startswith(BUILTIN_PREFIX):
            return self._builtin(path, None, None, path)
        p = self._resolve(path)
        model = self.parse_model(self._load(p), str(p))
        logger.info(f"Read model {p}: {len(model.blocks)} block(s), {model.n_dofs} DOFs")
        return model

    def _builtin(self, name: str, degree: Optional[int], elements: Optional[int], where: str) -> MultiBlockVolume:
        try:
            return builtin(name[len(BUILTIN_PREFIX):], degree, elements)
        except IgaError as e:
            raise FormatError(str(e), where, "/model")

    def parse_model(self, doc: Any, path: str) -> MultiBlockVolume:
        _require(isinstance(doc, dict), "a model must be a JSON object", path, "")
        blocks_doc = doc.get("blocks")
        _require(isinstance(blocks_doc, list) and blocks_doc, "'blocks' must be a non-empty list", path, "/blocks")
        blocks = [self._parse_block(b, path, f"/blocks/{i}") for i, b in enumerate(blocks_doc)]
        interfaces = []
        for i, itf in enumerate(doc.get("interfaces", [])):
            interfaces.append(self._parse_interface(itf, len(blocks), path, f"/interfaces/{i}"))
        tolerance = doc.get("merge_tolerance", self.merge_tolerance)
        _require(_is_number(tolerance) and tolerance >= 0, "'merge_tolerance' must be a number >= 0",
                 path, "/merge_tolerance")
        try:
            return MultiBlockVolume(tuple(blocks), tuple(interfaces), float(tolerance))
        except FormatError as e:
            raise FormatError(str(e), path, "/blocks")
        except IgaError as e:
            raise FormatError(str(e), path, "/interfaces")

    def _parse_block(self, doc: Any, path: str, pointer: str) -> BSplineVolume:
        _require(isinstance(doc, dict), "a block must be a JSON object", path, pointer)
        degrees = _triple(doc.get("degrees"), path, f"{pointer}/degrees")
        knots = doc.get("knots")
        _require(isinstance(knots, list) and len(knots) == 3, "'knots' must be a list of three knot vectors",
                 path, f"{pointer}/knots")
        kvs = []
        for d in range(3):
            _require(isinstance(knots[d], list) and all(_is_number(k) for k in knots[d]),
                     "knot vector must be a list of numbers", path, f"{pointer}/knots/{d}")
            try:
                kvs.append(KnotVector(degrees[d], tuple(knots[d])))
            except FormatError as e:
                raise FormatError(str(e), path, f"{pointer}/knots/{d}")
        cps = doc.get("control_points")
        shape = tuple(kv.n_basis for kv in kvs)
        _require(isinstance(cps, list) and len(cps) == int(np.prod(shape)),
                 f"'control_points' must list {int(np.prod(shape))} points", path, f"{pointer}/control_points")
        for i, cp in enumerate(cps):
            _require(isinstance(cp, list) and len(cp) == 3 and all(_is_number(c) for c in cp),
                     "control point must be [x, y, z]", path, f"{pointer}/control_points/{i}")
        grid = np.asarray(cps, dtype=np.float64).reshape(shape + (3,), order='F')
        return BSplineVolume(tuple(kvs), grid)

    def _parse_interface(self, doc: Any, n_blocks: int, path: str, pointer: str) -> Interface:
        _require(isinstance(doc, dict), "an interface must be a JSON object", path, pointer)
        ends = []
        for side in ("a", "b"):
            end = doc.get(side)
            _require(isinstance(end, list) and len(end) == 2 and isinstance(end[0], int)
                     and 0 <= end[0] < n_blocks,
                     f"'{side}' must be [block, face] with an existing block", path, f"{pointer}/{side}")
            ends.append((end[0], _face(end[1], path, f"{pointer}/{side}/1")))
        orientation = doc.get("orientation", 0)
        if orientation == "auto":
            orientation = None
        _require(orientation is None or (isinstance(orientation, int) and 0 <= orientation < 8),
                 "'orientation' must be 0..7, null or \"auto\"", path, f"{pointer}/orientation")
        return Interface(ends[0], ends[1], orientation)

    def write_model(self, model: MultiBlockVolume, path: str):
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8") as f:
            json.dump(model_document(model), f, indent=2)
            f.write("\n")
        logger.info(f"Wrote model {p}")

    # ---- problems -------------------------------------------------------

    def read_problem(self, path: str) -> HeatProblem:
        p = self._resolve(path)
        doc = self._load(p)
        where = str(p)
        _require(isinstance(doc, dict), "a problem must be a JSON object", where, "")
        model_ref = doc.get("model")
        _require(isinstance(model_ref, str), "'model' must be a path or \"builtin:<name>\"", where, "/model")
        if model_ref.startswith(BUILTIN_PREFIX):
            model = self._builtin(model_ref, _opt_int(doc, "degree", where), _opt_int(doc, "elements", where), where)
        else:
            model_path = self._resolve(model_ref, p.parent)
            if not model_path.exists():
                raise FormatError(f"model file not found: {model_path}", where, "/model")
            model = self.parse_model(self._load(model_path), str(model_path))
        levels = _opt_int(doc, "refine_h", where) or 0
        _require(levels >= 0, "'refine_h' must be >= 0", where, "/refine_h")
        model = refine(model, levels)

        source = _field(doc.get("source", 0.0), where, "/source")
        dirichlet = doc.get("dirichlet")
        _require(isinstance(dirichlet, dict), "'dirichlet' must be an object with faces and value",
                 where, "/dirichlet")
        faces = _faces(dirichlet.get("faces", "all"), model, where, "/dirichlet/faces")
        value = _field(dirichlet.get("value", 0.0), where, "/dirichlet/value")
        exact = _field(doc["exact"], where, "/exact") if doc.get("exact") is not None else None
        bump = _opt_int(doc, "approx_degree_bump", where) or 0
        subdivisions = _opt_int(doc, "approx_subdivisions", where) or 0
        try:
            problem = HeatProblem(model, source, value, faces, bump, subdivisions, exact)
        except IgaError as e:
            raise FormatError(str(e), where, "/dirichlet/faces")
        logger.info(f"Read problem {p}: {model.n_dofs} DOFs, {len(faces)} Dirichlet face(s)")
        return problem

    # ---- sample sets ----------------------------------------------------

    def read_samples(self, path: str) -> dict:
        """{"degrees", "elements", "knot_vectors" (each None unless given), "blocks": [SampleSet]}"""
        p = self._resolve(path)
        doc = self._load(p)
        where = str(p)
        _require(isinstance(doc, dict), "a sample file must be a JSON object", where, "")
        blocks_doc = doc.get("blocks", [doc])
        _require(isinstance(blocks_doc, list) and blocks_doc, "'blocks' must be a non-empty list", where, "/blocks")
        sets = []
        for i, bdoc in enumerate(blocks_doc):
            pointer = f"/blocks/{i}" if "blocks" in doc else ""
            sets.append(self._parse_sample_block(bdoc, i, where, pointer))
        knot_vectors = None
        if doc.get("knots") is not None:
            knots = doc["knots"]
            degrees = _triple(doc.get("degrees", 3), where, "/degrees")
            _require(isinstance(knots, list) and len(knots) == 3, "'knots' must be a list of three knot vectors",
                     where, "/knots")
            kvs = []
            for d in range(3):
                _require(isinstance(knots[d], list) and all(_is_number(k) for k in knots[d]),
                         "knot vector must be a list of numbers", where, f"/knots/{d}")
                try:
                    kvs.append(KnotVector(degrees[d], tuple(knots[d])))
                except FormatError as e:
                    raise FormatError(str(e), where, f"/knots/{d}")
            knot_vectors = tuple(kvs)
        return {
            "degrees": _triple(doc["degrees"], where, "/degrees") if doc.get("degrees") is not None else None,
            "elements": _triple(doc["elements"], where, "/elements") if doc.get("elements") is not None else None,
            "knot_vectors": knot_vectors,
            "blocks": sets,
        }

    def _parse_sample_block(self, doc: Any, index: int, path: str, pointer: str) -> SampleSet:
        _require(isinstance(doc, dict), "a sample block must be a JSON object", path, pointer)
        block = doc.get("block", index)
        samples = doc.get("samples")
        _require(isinstance(samples, list) and samples, "'samples' must be a non-empty list", path,
                 f"{pointer}/samples")
        n = len(samples)
        params = np.zeros((n, 3))
        positions = np.full((n, 3), np.nan)
        template = np.full((n, 3), np.nan)
        boundary = np.zeros(n, dtype=bool)
        for s, sample in enumerate(samples):
            sp = f"{pointer}/samples/{s}"
            _require(isinstance(sample, dict), "a sample must be a JSON object", path, sp)
            params[s] = _point(sample.get("uvw"), path, f"{sp}/uvw")
            if sample.get("xyz") is not None:
                positions[s] = _point(sample["xyz"], path, f"{sp}/xyz")
            if sample.get("template") is not None:
                template[s] = _point(sample["template"], path, f"{sp}/template")
            kind = sample.get("kind", "interior")
            _require(kind in ("interior", "boundary"), "'kind' must be \"interior\" or \"boundary\"",
                     path, f"{sp}/kind")
            boundary[s] = kind == "boundary"
            _require(np.all(np.isfinite(positions[s])) or np.all(np.isfinite(template[s])),
                     "a sample needs 'xyz' or 'template'", path, sp)
        has_template = bool(np.any(np.isfinite(template)))
        try:
            return SampleSet(int(block), params, positions, boundary, template if has_template else None)
        except FormatError as e:
            raise FormatError(str(e), path, f"{pointer}/samples")


def model_document(model: MultiBlockVolume) -> dict:
    """JSON-ready description of a model"""
    blocks = []
    for vol in model.blocks:
        blocks.append({
            "degrees": list(vol.degrees),
            "knots": [list(kv.knots) for kv in vol.knot_vectors],
            "control_points": vol.control_points.reshape(-1, 3, order='F').tolist(),
        })
    interfaces = [{"a": [i.a[0], FACE_NAMES[i.a[1]]], "b": [i.b[0], FACE_NAMES[i.b[1]]],
                   "orientation": i.orientation} for i in model.interfaces]
    return {"blocks": blocks, "interfaces": interfaces, "merge_tolerance": model.merge_tolerance}


def _require(condition: bool, message: str, path: str, pointer: str):
    if not condition:
        raise FormatError(message, path, pointer)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _opt_int(doc: dict, name: str, path: str) -> Optional[int]:
    value = doc.get(name)
    _require(value is None or (isinstance(value, int) and not isinstance(value, bool)),
             f"'{name}' must be an integer", path, f"/{name}")
    return value


def _point(value: Any, path: str, pointer: str) -> np.ndarray:
    _require(isinstance(value, list) and len(value) == 3 and all(_is_number(v) for v in value),
             "expected [a, b, c]", path, pointer)
    return np.asarray(value, dtype=np.float64)


def _face(value: Any, path: str, pointer: str) -> int:
    if isinstance(value, str) and value in FACE_NAMES:
        return FACE_NAMES.index(value)
    _require(isinstance(value, int) and 0 <= value < 6, f"face must be one of {list(FACE_NAMES)} or 0..5",
             path, pointer)
    return value


def _faces(value: Any, model: MultiBlockVolume, path: str, pointer: str) -> List[tuple]:
    if value == "all":
        return list(model.exterior_faces())
    _require(isinstance(value, list) and value, "'faces' must be \"all\" or a non-empty list", path, pointer)
    faces = []
    for i, item in enumerate(value):
        if isinstance(item, list) and len(item) == 2:
            _require(isinstance(item[0], int), "block index must be an integer", path, f"{pointer}/{i}/0")
            faces.append((item[0], _face(item[1], path, f"{pointer}/{i}/1")))
        else:
            faces.append((0, _face(item, path, f"{pointer}/{i}")))
    return faces


def _field(value: Any, path: str, pointer: str):
    _require(isinstance(value, str) or _is_number(value), "expected an expression string or a number",
             path, pointer)
    try:
        return as_field(value)
    except FormatError as e:
        raise FormatError(str(e), path, pointer)


def _triple(value: Any, path: str, pointer: str) -> List[int]:
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value] * 3
    _require(isinstance(value, list) and len(value) == 3
             and all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value),
             "expected a positive integer or a list of three", path, pointer)
    return list(value)
