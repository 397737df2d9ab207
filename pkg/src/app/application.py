"""
Application Layer - Orchestrates the hexagonal architecture
This is where the solver core, the file adapters and the reuse cache come together
"""
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from src.adapters.input.json_model_adapter import JsonModelAdapter
from src.adapters.output.csv_export_adapter import CsvExportAdapter
from src.adapters.output.vtk_export_adapter import VtkExportAdapter
from src.adapters.storage.binary_cache_adapter import BinaryCacheAdapter
from src.adapters.storage.memory_cache_adapter import MemoryCacheAdapter
from src.app.config import Settings
from src.core.domain import (
    DomainEvent, EntryMode, EventType, GlobalSystem, HeatAssembler, HeatProblem, ReuseCache,
    SolutionField, l2_relative_error,
)
from src.core.domain.csrbf import complete_samples, fit_bspline_solid
from src.core.domain.expression import Expression, parse
from src.core.domain.model_catalogue import builtin, deform, hollow_sphere_octant, refine, unit_cube
from src.core.domain.reuse_cache import CacheEntry, CacheKey
from src.core.domain.spline_volume import KnotVector, MultiBlockVolume, extract_bezier
from src.core.ports import CacheStorePort, ModelSourcePort, SolutionExportPort

logger = logging.getLogger(__name__)

CUBE_SOLUTION = "sin(pi*x)*sin(pi*y)*sin(pi*z)"
SPHERE_SOLUTION = "sin(x)*sin(y)*sin(z)*(x^2+y^2+z^2-121)*(x^2+y^2+z^2-81)"
VERIFY_MIN_RATIO = 2.0
VERIFY_GAUSS_AGREEMENT = 0.10
VERIFY_SPHERE_FACTOR = 2.0
VERIFY_ERROR_THRESHOLD = 1e-2
BENCH_MIN_ACCELERATION = 2.0


@dataclass
class ModelTiming:
    """One row of a BenchReport"""
    name: str
    dofs: int
    cold_seconds: float
    warm_seconds: float
    checksum_match: Optional[bool] = None
    l2_error: Optional[float] = None

    @property
    def acceleration_ratio(self) -> float:
        return self.cold_seconds / self.warm_seconds if self.warm_seconds > 0 else float("inf")

    def to_dict(self) -> dict:
        row = asdict(self)
        row["acceleration_ratio"] = self.acceleration_ratio
        return row


@dataclass
class BenchReport:
    """Cold and warm assembly timings (minimum over `repeats` runs)"""
    threads: int
    repeats: int
    entry_mode: str
    models: List[ModelTiming] = field(default_factory=list)
    cache_nnz: int = 0
    cache_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "threads": self.threads,
            "repeats": self.repeats,
            "entry_mode": self.entry_mode,
            "cache_nnz": self.cache_nnz,
            "cache_bytes": self.cache_bytes,
            "models": [m.to_dict() for m in self.models],
        }

    def write(self, path: str):
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def table(self) -> str:
        lines = [f"{'model':<28}{'DOFs':>8}{'cold [s]':>12}{'warm [s]':>12}{'ratio':>9}{'match':>7}{'L2 err':>12}"]
        for m in self.models:
            match = "-" if m.checksum_match is None else ("yes" if m.checksum_match else "NO")
            err = "-" if m.l2_error is None else f"{m.l2_error:.3e}"
            lines.append(f"{m.name:<28}{m.dofs:>8}{m.cold_seconds:>12.4f}{m.warm_seconds:>12.4f}"
                         f"{m.acceleration_ratio:>9.2f}{match:>7}{err:>12}")
        lines.append(f"threads {self.threads}, min of {self.repeats} run(s), mode {self.entry_mode}, "
                     f"cache NNZ {self.cache_nnz}, {self.cache_bytes} bytes")
        return "\n".join(lines)


def _min_time(fn: Callable[[], object], repeats: int) -> Tuple[float, object]:
    best = float("inf")
    result = None
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def manufactured_problem(domain: MultiBlockVolume, exact: Expression, bump: int = 0) -> HeatProblem:
    """Source g = Laplace(T) derived symbolically, Dirichlet data T on every exterior face"""
    return HeatProblem(domain, exact.laplacian(), exact, tuple(domain.exterior_faces()), bump, 0, exact)


class IgaApplication:
    """
    Main application that wires together the hexagonal architecture

    Architecture:
    - Core: HeatAssembler over a ReuseCache
    - Ports: model source, solution exporters, cache store
    - Adapters: JSON files, CSV/VTK exports, binary cache directory
    """

    def __init__(
        self,
        settings: Optional[Settings] = None,
        model_source: Optional[ModelSourcePort] = None,
        exporters: Optional[Dict[str, SolutionExportPort]] = None,
        cache_store: Optional[CacheStorePort] = None,
        persistent_cache: bool = True,
    ):
        """
        Initialize the application

        Args:
            settings: configuration (defaults to Settings.from_env())
            model_source: reader for models/problems/samples (defaults to JsonModelAdapter)
            exporters: solution exporters by name (defaults to csv and vtk)
            cache_store: persistent store (defaults to BinaryCacheAdapter on settings.cache_dir)
            persistent_cache: False keeps the cache in memory only
        """
        self.settings = settings or Settings.from_env()
        logger.info("Initializing Reuse-IGA application")
        self.model_source = model_source or JsonModelAdapter(merge_tolerance=self.settings.merge_tolerance)
        self.exporters = exporters or {"csv": CsvExportAdapter(), "vtk": VtkExportAdapter()}
        if cache_store is None:
            cache_store = BinaryCacheAdapter(self.settings.cache_dir) if persistent_cache else MemoryCacheAdapter()
        self.cache_store = cache_store
        self.cache = ReuseCache(cache_store)
        self.assembler = self._assembler(self.cache)
        self._event_counts: Dict[str, int] = {t.value: 0 for t in EventType}
        self.assembler.register_event_listener(self._handle_domain_event)

    def _assembler(self, cache: ReuseCache) -> HeatAssembler:
        s = self.settings
        return HeatAssembler(cache, EntryMode(s.entry_mode), s.threads, s.rcond_warning,
                             s.direct_solver_max_dof, s.cg_rtol)

    def _handle_domain_event(self, event: DomainEvent):
        self._event_counts[event.event_type.value] += 1
        logger.debug(f"Event {event.event_type.value}: {event.data}")

    def get_status(self) -> dict:
        return {
            "entry_mode": self.settings.entry_mode,
            "threads": self.settings.threads,
            "cache_entries": len(self.cache),
            "cache_hits": self.cache.hits,
            "builder_calls": self.cache.builder_calls,
            "events": dict(self._event_counts),
        }

    # ---- solve ----------------------------------------------------------

    def solve(self, problem_path: str, output: Optional[str] = None, vtk: bool = False) -> dict:
        """Assemble and solve one problem; exports and an error report if an exact solution is given"""
        logger.info("=" * 60)
        logger.info(f"Solving {problem_path}")
        logger.info("=" * 60)
        problem = self.model_source.read_problem(problem_path)
        system, solution = self.assembler.run(problem)
        report = self._solution_report(problem, system, solution)
        if output:
            report["files"] = self.export(solution, output, vtk)
        print(f"DOFs: {report['dofs']}  solver: {report['solver']} ({report['iterations']} it, "
              f"residual {report['residual']:.2e})  assembly {report['assembly_seconds']:.3f}s")
        if "l2_error" in report:
            print(f"L2 error: {report['l2_error']:.6e} ({'relative' if report['l2_relative'] else 'absolute'})")
        for f in report.get("files", []):
            print(f"wrote {f}")
        return report

    def _solution_report(self, problem: HeatProblem, system: GlobalSystem, solution: SolutionField) -> dict:
        r = solution.report
        report = {
            "dofs": system.n_dofs,
            "checksum": system.checksum(),
            "key_hash": system.key_hash,
            "assembly_seconds": system.assembly_seconds,
            "solver": r.method,
            "iterations": r.iterations,
            "residual": r.residual,
            "degenerate_elements": self._event_counts[EventType.ELEMENT_DEGENERATE.value],
        }
        if problem.exact is not None:
            err = l2_relative_error(solution, problem.exact)
            report["l2_error"] = err.value
            report["l2_relative"] = err.relative
        return report

    def export(self, solution: SolutionField, output: str, vtk: bool = False) -> List[str]:
        out = Path(output)
        files = self.exporters["csv"].export(solution, str(out.with_suffix(".csv")))
        if vtk and "vtk" in self.exporters:
            files += self.exporters["vtk"].export(solution, str(out.with_suffix(".vtk")))
        return files

    # ---- reuse / bench --------------------------------------------------

    def _cold_assembly(self, problem: HeatProblem) -> GlobalSystem:
        """Assembly without reuse: every degree-only table rebuilt per element"""
        return self._assembler(ReuseCache()).assemble_without_reuse(problem)

    def _time_pair(self, name: str, problem: HeatProblem, repeats: int) -> Tuple[ModelTiming, GlobalSystem]:
        cold_s, cold = _min_time(lambda: self._cold_assembly(problem), repeats)
        self.assembler.prepare(problem)
        warm_s, warm = _min_time(lambda: self.assembler.assemble(problem, self.assembler.prepare(problem)),
                                 repeats)
        timing = ModelTiming(name, warm.n_dofs, cold_s, warm_s, cold.checksum() == warm.checksum())
        return timing, warm

    def reuse(self, problem_path: str, model_paths: Sequence[str], report_path: Optional[str] = None,
              repeats: Optional[int] = None) -> BenchReport:
        """Solve the problem's model, then every listed model with the same structure, from the cache"""
        logger.info("=" * 60)
        logger.info(f"Reuse run: {problem_path} + {len(model_paths)} model(s)")
        logger.info("=" * 60)
        repeats = repeats or self.settings.timing_repeats
        base = self.model_source.read_problem(problem_path)
        problems = [(Path(problem_path).stem, base)]
        for path in model_paths:
            problems.append((Path(path).stem, base.with_domain(self.model_source.read_model(path))))
        report = BenchReport(self.settings.threads, repeats, self.settings.entry_mode)
        first_key = self.assembler.key_for(base)
        for name, problem in problems:
            if self.assembler.key_for(problem) != first_key:
                logger.warning(f"Model {name} has a different structure; it builds its own cache entry")
            timing, system = self._time_pair(name, problem, repeats)
            solution = self.assembler.solve(self.assembler.impose_dirichlet(system, problem))
            if problem.exact is not None:
                timing.l2_error = l2_relative_error(solution, problem.exact).value
            report.models.append(timing)
        self._add_cache_size(report)
        print(report.table())
        if report_path:
            report.write(report_path)
            print(f"wrote {report_path}")
        return report

    def bench(self, model: str = "unit_cube", degree: int = 3, levels: Sequence[int] = (0, 1, 2),
              repeats: Optional[int] = None, report_path: Optional[str] = None, seed: int = 1) -> BenchReport:
        """Timing matrix across h-levels: cold vs warm assembly of a deformed second model"""
        logger.info("=" * 60)
        logger.info(f"Benchmark: {model}, degree {degree}, h-levels {list(levels)}")
        logger.info("=" * 60)
        repeats = repeats or self.settings.timing_repeats
        exact = parse(CUBE_SOLUTION)
        report = BenchReport(self.settings.threads, repeats, self.settings.entry_mode)
        for level in levels:
            domain = refine(builtin(model, degree), level)
            first = manufactured_problem(domain, exact)
            self.assembler.prepare(first)
            second = first.with_domain(deform(domain, seed + level, amplitude=0.02))
            timing, _ = self._time_pair(f"{model} p={degree} h={level}", second, repeats)
            report.models.append(timing)
            if timing.acceleration_ratio < BENCH_MIN_ACCELERATION:
                logger.warning(f"Reuse acceleration {timing.acceleration_ratio:.2f} below "
                               f"{BENCH_MIN_ACCELERATION} at h={level} ({timing.dofs} DOFs)")
        self._add_cache_size(report)
        print(report.table())
        if report_path:
            report.write(report_path)
            print(f"wrote {report_path}")
        return report

    def _add_cache_size(self, report: BenchReport):
        for entry in self.cache.entries():
            s = entry.stats(include_timings=False)
            report.cache_nnz += s["total_nnz"]
            report.cache_bytes += s["total_bytes"]

    # ---- verification ---------------------------------------------------

    def _both_errors(self, problem: HeatProblem) -> Tuple[float, float, int]:
        system, solution = self.assembler.run(problem)
        quad_free = l2_relative_error(solution, problem.exact).value
        gauss_system = self.assembler.assemble_reference_gauss(problem)
        gauss = self.assembler.solve(self.assembler.impose_dirichlet(gauss_system, problem))
        return quad_free, l2_relative_error(gauss, problem.exact).value, system.n_dofs

    def verify(self, degree: int = 3, levels: int = 2, sphere: bool = True) -> bool:
        """Manufactured-solution suites: unit-cube convergence and the hollow-sphere octant"""
        logger.info("=" * 60)
        logger.info(f"Verification suite (degree {degree}, h-levels 0..{levels})")
        logger.info("=" * 60)
        ok = True
        exact = parse(CUBE_SOLUTION)
        errors = []
        print(f"unit cube, T = {CUBE_SOLUTION}")
        for level in range(levels + 1):
            problem = manufactured_problem(unit_cube(degree, 2 ** level), exact)
            qf, gauss, dofs = self._both_errors(problem)
            agree = abs(qf - gauss) <= VERIFY_GAUSS_AGREEMENT * max(qf, gauss)
            ok &= agree
            ratio = errors[-1] / qf if errors else float("nan")
            if errors and not ratio >= VERIFY_MIN_RATIO:
                ok = False
            errors.append(qf)
            print(f"  h={level}  DOFs {dofs:>6}  L2 {qf:.4e}  gauss {gauss:.4e}  ratio {ratio:6.2f}  "
                  f"{'ok' if agree else 'MISMATCH'}")
        if errors[-1] > VERIFY_ERROR_THRESHOLD:
            ok = False
            print(f"  finest error {errors[-1]:.3e} above {VERIFY_ERROR_THRESHOLD:.0e}")

        if sphere:
            print(f"hollow sphere octant, T = {SPHERE_SOLUTION}")
            problem = manufactured_problem(hollow_sphere_octant(degree), parse(SPHERE_SOLUTION))
            qf, gauss, dofs = self._both_errors(problem)
            within = qf <= VERIFY_SPHERE_FACTOR * gauss
            ok &= within
            print(f"  DOFs {dofs:>6}  L2 {qf:.4e}  gauss {gauss:.4e}  {'ok' if within else 'FAIL'}")

        print("verify: PASS" if ok else "verify: FAIL")
        return bool(ok)

    # ---- fitting / extraction -------------------------------------------

    def fit(self, samples_path: str, output: str, degree: Optional[int] = None, elements: Optional[int] = None,
            smoothing: Optional[float] = None, support: Optional[float] = None) -> MultiBlockVolume:
        """Fit B-spline solids to sample sets, completing template-only samples with the elastic map"""
        logger.info("=" * 60)
        logger.info(f"Fitting solid to {samples_path}")
        logger.info("=" * 60)
        s = self.settings
        data = self.model_source.read_samples(samples_path)
        knot_vectors = data["knot_vectors"]
        if knot_vectors is None:
            degrees = [degree] * 3 if degree is not None else (data["degrees"] or [3, 3, 3])
            counts = [elements] * 3 if elements is not None else (data["elements"] or [1, 1, 1])
            knot_vectors = tuple(KnotVector.uniform(p, n) for p, n in zip(degrees, counts))
        sets = complete_samples(data["blocks"], s.csrbf_support_fraction, support)
        smoothing = s.fit_smoothing if smoothing is None else smoothing
        blocks = [fit_bspline_solid(samples, knot_vectors, smoothing, s.boundary_sample_weight)
                  for samples in sorted(sets, key=lambda x: x.block)]
        model = MultiBlockVolume(tuple(blocks), (), s.merge_tolerance)
        self.model_source.write_model(model, output)
        print(f"fitted {len(blocks)} block(s), {model.n_dofs} control points, wrote {output}")
        return model

    def extract(self, model_path: str, output: Optional[str] = None) -> List[dict]:
        """Bezier elements of every block as JSON-ready dictionaries"""
        model = self.model_source.read_model(model_path)
        elements = []
        for b, vol in enumerate(model.blocks):
            for bez in extract_bezier(vol, b):
                elements.append({
                    "block": b,
                    "element": list(bez.element),
                    "sub_box": [list(map(float, r)) for r in bez.sub_box],
                    "degrees": list(bez.degrees),
                    "control_points": bez.control_points.reshape(-1, 3, order='F').tolist(),
                })
        print(f"{len(elements)} Bezier element(s) in {len(model.blocks)} block(s)")
        if output:
            p = Path(output)
            p.parent.mkdir(parents=True, exist_ok=True)
            with open(p, "w", encoding="utf-8") as f:
                json.dump({"elements": elements}, f, indent=1)
            print(f"wrote {output}")
        return elements

    # ---- cache ----------------------------------------------------------

    def cache_stats(self) -> dict:
        """Per-entry NNZ and byte counts of every stored entry"""
        info = self.cache_store.get_store_info()
        entries = []
        for key_hash in self.cache_store.list_keys():
            stored = self.cache_store.load(key_hash)
            if stored is None:
                continue
            manifest, items = stored
            entry = CacheEntry(CacheKey.from_dict(manifest["key"]), items, manifest.get("timings", {}))
            entries.append(entry.stats(include_timings=True))
        report = {"store": {k: v for k, v in info.items() if k != "keys"}, "entries": entries}
        print(json.dumps(report, indent=2, sort_keys=True))
        return report

    def cache_clear(self) -> int:
        removed = self.cache.clear()
        print(f"removed {removed} cache file(s)")
        return removed
