"""
CSV Export Adapter
Writes (x, y, z, T) rows sampled on every element; the output is
byte-for-byte reproducible for identical solutions
"""
import logging
from pathlib import Path
from typing import List

import numpy as np

from src.core.domain.assembly import SolutionField
from src.core.ports.export_port import SolutionExportPort

logger = logging.getLogger(__name__)

HEADER = "x,y,z,T"
NUMBER_FORMAT = "%.17g"


class CsvExportAdapter(SolutionExportPort):
    """
    Solution samples as CSV
    Rows are ordered block by block, element by element, on an n^3 local lattice
    """

    def __init__(self, samples_per_direction: int = 3):
        self.samples_per_direction = samples_per_direction

    def export(self, solution: SolutionField, path: str) -> List[str]:
        rows = solution.element_samples(self.samples_per_direction)
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as f:
            np.savetxt(f, rows, fmt=NUMBER_FORMAT, delimiter=",", header=HEADER, comments="")
        logger.info(f"Wrote {len(rows)} solution samples to {p}")
        return [str(p)]

    def get_export_info(self) -> dict:
        return {"format": "csv", "columns": HEADER.split(","), "samples_per_direction": self.samples_per_direction}
