"""
Configuration for the Reuse-IGA solver
"""
import os
from dataclasses import dataclass, replace
from pathlib import Path

# ============================================================================
# FILES
# ============================================================================

# Persistent reuse cache (override with REUSE_IGA_CACHE_DIR)
CACHE_DIR = str(Path("~/.cache/reuse_iga").expanduser())

# Log file next to the working directory; '' disables file logging
LOG_FILE = "reuse_iga.log"
LOG_LEVEL = "INFO"

# ============================================================================
# ASSEMBLY AND SOLVE
# ============================================================================

# Element-loop workers
THREADS = 1

# "adjoint" or "per_entry"
ENTRY_MODE = "adjoint"

# Interface control points closer than this are merged
MERGE_TOLERANCE = 1e-9

# Per-element warning threshold on the approximation system's rcond
RCOND_WARNING = 1e-12

# Sparse LU below this many unknowns, Jacobi-CG above
DIRECT_SOLVER_MAX_DOF = 20000
CG_RTOL = 1e-10

# Benchmarks report the minimum over this many repetitions
TIMING_REPEATS = 3

# ============================================================================
# SOLID FITTING
# ============================================================================

# Elastic-map support radius as a fraction of the constraint bounding-box diagonal
CSRBF_SUPPORT_FRACTION = 0.25

# Second-difference smoothing relative to the normal-matrix trace
FIT_SMOOTHING = 1e-6

# Weight of boundary samples against interior ones
BOUNDARY_SAMPLE_WEIGHT = 10.0


@dataclass(frozen=True)
class Settings:
    """Bundle of the constants above; CLI flags override via with_overrides"""
    cache_dir: str = CACHE_DIR
    log_file: str = LOG_FILE
    log_level: str = LOG_LEVEL
    threads: int = THREADS
    entry_mode: str = ENTRY_MODE
    merge_tolerance: float = MERGE_TOLERANCE
    rcond_warning: float = RCOND_WARNING
    direct_solver_max_dof: int = DIRECT_SOLVER_MAX_DOF
    cg_rtol: float = CG_RTOL
    timing_repeats: int = TIMING_REPEATS
    csrbf_support_fraction: float = CSRBF_SUPPORT_FRACTION
    fit_smoothing: float = FIT_SMOOTHING
    boundary_sample_weight: float = BOUNDARY_SAMPLE_WEIGHT

    @classmethod
    def from_env(cls) -> "Settings":
        settings = cls()
        cache_dir = os.environ.get("REUSE_IGA_CACHE_DIR")
        if cache_dir:
            settings = replace(settings, cache_dir=str(Path(cache_dir).expanduser()))
        level = os.environ.get("REUSE_IGA_LOG_LEVEL")
        if level:
            settings = replace(settings, log_level=level.upper())
        return settings

    def with_overrides(self, **overrides) -> "Settings":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})
