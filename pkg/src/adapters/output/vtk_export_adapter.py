"""
VTK Export Adapter
One legacy-VTK structured grid per block, for external viewers
"""
import logging
from pathlib import Path
from typing import List

import numpy as np

from src.core.domain.assembly import SolutionField
from src.core.ports.export_port import SolutionExportPort

logger = logging.getLogger(__name__)


class VtkExportAdapter(SolutionExportPort):
    """
    ASCII legacy VTK (STRUCTURED_GRID) writer
    Each block is sampled on a lattice with `resolution` intervals per element
    """

    def __init__(self, resolution: int = 4):
        self.resolution = max(1, int(resolution))

    def export(self, solution: SolutionField, path: str) -> List[str]:
        base = Path(path)
        base.parent.mkdir(parents=True, exist_ok=True)
        stem = base.with_suffix("")
        written = []
        for b, vol in enumerate(solution.domain.blocks):
            axes = [np.linspace(0.0, 1.0, kv.n_elements * self.resolution + 1) for kv in vol.knot_vectors]
            # VTK point order: first index fastest
            grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
            params = grid.transpose(2, 1, 0, 3).reshape(-1, 3)
            points = vol.evaluate(params)
            values = solution.evaluate(b, params)
            out = Path(f"{stem}_block{b}.vtk")
            with open(out, "w", encoding="utf-8", newline="\n") as f:
                f.write("# vtk DataFile Version 3.0\n")
                f.write(f"temperature block {b}\n")
                f.write("ASCII\n")
                f.write("DATASET STRUCTURED_GRID\n")
                f.write(f"DIMENSIONS {len(axes[0])} {len(axes[1])} {len(axes[2])}\n")
                f.write(f"POINTS {len(points)} double\n")
                np.savetxt(f, points, fmt="%.12g")
                f.write(f"POINT_DATA {len(points)}\n")
                f.write("SCALARS T double 1\n")
                f.write("LOOKUP_TABLE default\n")
                np.savetxt(f, values, fmt="%.12g")
            written.append(str(out))
        logger.info(f"Wrote {len(written)} VTK file(s) next to {stem}")
        return written

    def get_export_info(self) -> dict:
        return {"format": "vtk-legacy", "dataset": "STRUCTURED_GRID", "resolution": self.resolution}
