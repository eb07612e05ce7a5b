"""Artifact repository: rasters, solver records and traced paths on disk."""

import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from config.settings import ATLAS_VERSION
from models.dynamics import RasterJob, TracedPath


def _pair(z: complex) -> List[float]:
    return [float(z.real), float(z.imag)]


class ArtifactRepository:
    """Writes every artifact under one output directory, byte-for-byte reproducibly."""

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        self.logger = logging.getLogger(__name__)

    def path_for(self, name: str) -> str:
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, name)

    # ==================== RASTERS ====================

    @staticmethod
    def encode_ppm(rgb: np.ndarray) -> bytes:
        """Binary P6, 8-bit, row-major, no comments."""
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"expected a (height, width, 3) array, got {rgb.shape}")
        height, width, _ = rgb.shape
        header = f"P6\n{width} {height}\n255\n".encode("ascii")
        return header + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()

    def save_ppm(self, name: str, rgb: np.ndarray) -> str:
        path = self.path_for(name)
        with open(path, "wb") as f:
            f.write(self.encode_ppm(rgb))
        self.logger.debug(f"Wrote {path}")
        return path

    def save_render_sidecar(self, name: str, job: RasterJob, legend: Dict[str, Any],
                            counts: Optional[Dict[str, int]] = None) -> str:
        sidecar = {
            "version": ATLAS_VERSION,
            "rho": _pair(job.rho),
            "window": list(job.window),
            "resolution": list(job.resolution),
            "max_iter": job.budget.max_iter,
            "tol": job.budget.tol,
            "legend": {key: list(color) for key, color in legend.items()},
        }
        if counts is not None:
            sidecar["counts"] = counts
        return self._write_json(name, sidecar)

    # ==================== SOLVER RECORDS ====================

    def save_records(self, name: str, records: Iterable[Dict[str, Any]]) -> str:
        """One JSON object per line, keys sorted."""
        path = self.path_for(name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        self.logger.debug(f"Wrote {path}")
        return path

    # ==================== TRACED PATHS ====================

    TRACE_HEADER = ["t", "lambda_re", "lambda_im", "level", "word"]

    def save_trace(self, name: str, traced: TracedPath, rho: complex) -> str:
        """CSV rows per sample, then a terminal row with the solver cross-check distance."""
        path = self.path_for(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.TRACE_HEADER)
            for t, lam, level, word in zip(traced.t_samples, traced.lambda_samples,
                                           traced.levels, traced.words):
                writer.writerow([repr(t), repr(lam.real), repr(lam.imag), repr(level),
                                 " ".join(str(j) for j in word)])
            if traced.terminal_estimate is not None:
                distance = "" if traced.solver_distance is None else repr(traced.solver_distance)
                writer.writerow(["terminal", repr(traced.terminal_estimate.real),
                                 repr(traced.terminal_estimate.imag), distance,
                                 traced.target.format()])
        self._write_json(os.path.splitext(name)[0] + ".json", {
            "version": ATLAS_VERSION,
            "rho": _pair(rho),
            "target": traced.target.format(),
            "target_kind": traced.target_kind.value,
            "samples": len(traced.t_samples),
            "depth": traced.depth,
            "tol": traced.tolerances,
            "max_residual": max(traced.residuals) if traced.residuals else None,
            "solver_estimate": None if traced.solver_estimate is None else _pair(traced.solver_estimate),
            "solver_distance": traced.solver_distance,
            "solver_error": traced.solver_error,
        })
        self.logger.debug(f"Wrote {path}")
        return path

    def _write_json(self, name: str, payload: Dict[str, Any]) -> str:
        path = self.path_for(name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        return path
