"""
Main Entry Point for Reuse-IGA
Command-line front end: solve, reuse, bench, verify, fit, extract, cache
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add the repository root to path
root_path = str(Path(__file__).resolve().parent.parent.parent)
if root_path not in sys.path:
    sys.path.insert(0, root_path)

from src.app.application import IgaApplication
from src.app.config import Settings
from src.core.domain.errors import (
    ConfigurationError, DegenerateGeometryError, DomainError, FitError, FormatError, SolverError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def configure_logging(level: str, log_file: str):
    """Console plus optional file handler"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reuse-iga",
                                     description="Quadrature-free IGA heat conduction with computation reuse")
    parser.add_argument("--threads", type=int, help="element-loop workers")
    parser.add_argument("--mode", choices=["adjoint", "per_entry"], help="stiffness evaluation mode")
    parser.add_argument("--cache-dir", help="persistent cache directory")
    parser.add_argument("--no-cache", action="store_true", help="keep the reuse cache in memory only")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--log-file", help="log file ('' disables)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="assemble and solve one problem")
    p.add_argument("problem")
    p.add_argument("--output", "-o", help="export prefix (CSV, plus VTK with --vtk)")
    p.add_argument("--vtk", action="store_true")

    p = sub.add_parser("reuse", help="solve structurally identical models from one cache entry")
    p.add_argument("problem")
    p.add_argument("--models", nargs="+", default=[])
    p.add_argument("--repeats", type=int)
    p.add_argument("--report", help="BenchReport JSON path")

    p = sub.add_parser("bench", help="cold vs warm assembly across h-levels")
    p.add_argument("--model", default="unit_cube")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--levels", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--repeats", type=int)
    p.add_argument("--report", default="bench_report.json")

    p = sub.add_parser("verify", help="manufactured-solution suites")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--skip-sphere", action="store_true")

    p = sub.add_parser("fit", help="fit B-spline solids to a sample file")
    p.add_argument("samples")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--degree", type=int)
    p.add_argument("--elements", type=int)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--support", type=float, help="elastic-map support radius")

    p = sub.add_parser("extract", help="dump Bezier elements of a model")
    p.add_argument("model")
    p.add_argument("--output", "-o")

    p = sub.add_parser("cache", help="inspect or clear the persistent cache")
    p.add_argument("action", choices=["stats", "clear"])
    return parser


def run_command(app: IgaApplication, args: argparse.Namespace) -> int:
    if args.command == "solve":
        app.solve(args.problem, args.output, args.vtk)
    elif args.command == "reuse":
        app.reuse(args.problem, args.models, args.report, args.repeats)
    elif args.command == "bench":
        app.bench(args.model, args.degree, args.levels, args.repeats, args.report)
    elif args.command == "verify":
        if not app.verify(args.degree, args.levels, not args.skip_sphere):
            return EXIT_NUMERIC
    elif args.command == "fit":
        app.fit(args.samples, args.output, args.degree, args.elements, args.smoothing, args.support)
    elif args.command == "extract":
        app.extract(args.model, args.output)
    elif args.command == "cache":
        if args.action == "stats":
            app.cache_stats()
        else:
            app.cache_clear()
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main function; returns the process exit code"""
    args = build_parser().parse_args(argv)
    settings = Settings.from_env().with_overrides(
        threads=args.threads,
        entry_mode=args.mode,
        cache_dir=args.cache_dir,
        log_file=args.log_file,
        log_level="DEBUG" if args.verbose else None,
    )
    configure_logging(settings.log_level, settings.log_file)
    logger.info("=" * 60)
    logger.info(f"Reuse-IGA {args.command}")
    logger.info("=" * 60)

    try:
        app = IgaApplication(settings, persistent_cache=not args.no_cache)
        code = run_command(app, args)
        logger.debug(f"Status: {app.get_status()}")
        return code
    except (FormatError, DomainError, ConfigurationError, FileNotFoundError) as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateGeometryError, SolverError, FitError) as e:
        logger.error(f"Numeric failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Application error: {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
