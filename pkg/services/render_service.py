"""Service for rasterizing the lambda plane into the shift locus and shell components.

This service:
1. Iterates the orbits of both asymptotic values for a whole row of lambdas at once
2. Traps orbits falling into the origin and detects attracting cycles up to period 8
3. Sorts every pixel into Shift, MLambda, MMu or Unresolved
4. Colors pixels with the legend green / yellow / cyan / red / khaki / gray
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config.settings import AtlasConfig
from models.dynamics import RasterJob, Region
from services.family_service import derivative_array, evaluate_array

MAX_DETECTED_PERIOD = 8
CONTRACTION_SLACK = 1e-3

# region codes stored in the grid
UNRESOLVED, SHIFT, M_LAMBDA, M_MU = 0, 1, 2, 3
REGION_NAMES = {UNRESOLVED: Region.UNRESOLVED, SHIFT: Region.SHIFT,
                M_LAMBDA: Region.M_LAMBDA, M_MU: Region.M_MU}


@dataclass
class RasterGrid:
    """Row-major classification of a RasterJob."""
    job: RasterJob
    region: np.ndarray
    # attracting period of whichever asymptotic value is captured by a cycle, 0 otherwise
    period: np.ndarray

    def region_at(self, x: int, y: int) -> Region:
        return REGION_NAMES[int(self.region[y, x])]

    def counts(self) -> Dict[str, int]:
        return {REGION_NAMES[code].value: int(np.count_nonzero(self.region == code))
                for code in REGION_NAMES}


class ParameterPlaneRenderer:
    """Classifies a window of the lambda plane for a fixed multiplier rho."""

    LEGEND: Dict[str, Tuple[int, int, int]] = {
        "Shift": (0, 160, 0),
        "period1": (255, 255, 0),
        "period2": (0, 255, 255),
        "period3": (255, 0, 0),
        "period4": (240, 230, 140),
        "other": (128, 128, 128),
    }

    def __init__(self, config: Optional[AtlasConfig] = None, verbose: bool = False):
        self.config = config or AtlasConfig()
        self.verbose = verbose
        self.logger = logging.getLogger(__name__)

    def lambda_grid(self, job: RasterJob) -> np.ndarray:
        """Pixel-center lambdas; row 0 is the top edge of the window."""
        re_min, re_max, im_min, im_max = job.window
        width, height = job.resolution
        xs = re_min + (np.arange(width) + 0.5) * (re_max - re_min) / width
        ys = im_max - (np.arange(height) + 0.5) * (im_max - im_min) / height
        return xs[None, :] + 1j * ys[:, None]

    def render_parameter_plane(self, job: RasterJob) -> RasterGrid:
        """Classify every pixel; rows run in parallel up to ATLAS_THREADS workers."""
        lam = self.lambda_grid(job)
        height = job.resolution[1]
        region = np.zeros(lam.shape, dtype=np.uint8)
        period = np.zeros(lam.shape, dtype=np.int16)

        def work(y: int) -> Tuple[int, np.ndarray, np.ndarray]:
            r, p = self.classify_lambdas(job.rho, lam[y], job.budget.max_iter, job.budget.tol)
            return y, r, p

        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            for y, r, p in pool.map(work, range(height)):
                region[y] = r
                period[y] = p
                if self.verbose and (y + 1) % max(1, height // 10) == 0:
                    self.logger.debug(f"Rendered {y + 1}/{height} rows")
        return RasterGrid(job=job, region=region, period=period)

    def classify_lambdas(self, rho: complex, lam: np.ndarray, max_iter: int,
                         tol: float) -> Tuple[np.ndarray, np.ndarray]:
        """Region codes and periods for an array of lambdas."""
        lam = np.asarray(lam, dtype=np.complex128)
        with np.errstate(all="ignore"):
            mu = 1.0 / (1.0 / lam - 2.0 / rho)
        valid = np.isfinite(mu) & (lam != 0)
        lam_safe = np.where(valid, lam, 1.0)
        mu_safe = np.where(valid, mu, -1.0)
        trap = self.config.trap_factor * (1.0 - abs(rho)) * np.minimum(
            np.minimum(np.abs(lam_safe), np.abs(mu_safe)), 1.0)

        fate_l, pole_l = self._orbit_fates(rho, lam_safe, mu_safe, lam_safe, lam_safe, trap,
                                           max_iter, tol)
        fate_m, pole_m = self._orbit_fates(rho, lam_safe, mu_safe, mu_safe, mu_safe, trap,
                                           max_iter, tol)

        region = np.full(lam.shape, UNRESOLVED, dtype=np.uint8)
        period = np.zeros(lam.shape, dtype=np.int16)
        clean = valid & ~pole_l & ~pole_m
        shift = clean & (fate_l == -1) & (fate_m == -1)
        m_lambda = clean & (fate_l > 0)
        m_mu = clean & ~m_lambda & (fate_m > 0)
        region[shift] = SHIFT
        region[m_lambda] = M_LAMBDA
        region[m_mu] = M_MU
        period[m_lambda] = fate_l[m_lambda]
        period[m_mu] = fate_m[m_mu]
        return region, period

    def _orbit_fates(self, rho: complex, lam: np.ndarray, mu: np.ndarray, z0: np.ndarray,
                     successor: np.ndarray, trap: np.ndarray, max_iter: int,
                     tol: float) -> Tuple[np.ndarray, np.ndarray]:
        """-1 for the origin, p > 0 for an attracting p-cycle, 0 when unresolved."""
        z = np.array(z0, dtype=np.complex128)
        fate = np.zeros(z.shape, dtype=np.int16)
        through_pole = np.zeros(z.shape, dtype=bool)
        active = np.ones(z.shape, dtype=bool)
        history: deque = deque(maxlen=MAX_DETECTED_PERIOD)
        bound = abs(rho) * (1.0 + CONTRACTION_SLACK)
        guard = self.config.overflow_guard

        for _ in range(max_iter):
            history.append(z.copy())
            nxt = evaluate_array(lam, mu, z, guard)
            hit_pole = active & ~np.isfinite(nxt)
            through_pole |= hit_pole
            nxt = np.where(np.isfinite(nxt), nxt, successor)
            z = np.where(active, nxt, z)

            near = active & (np.abs(z) < trap)
            if near.any():
                w = evaluate_array(lam, mu, z, guard)
                contracting = near & np.isfinite(w) & (np.abs(w) <= bound * np.abs(z))
                fate[contracting] = -1
                active &= ~contracting

            for p in range(1, len(history) + 1):
                close = active & (np.abs(z) >= trap) & (np.abs(z - history[-p]) < tol)
                if not close.any():
                    continue
                idx = np.nonzero(close)
                mult = self._cycle_multiplier(rho, lam[idx], mu[idx], z[idx], p, guard)
                attracting = np.zeros(z.shape, dtype=bool)
                attracting[idx] = np.abs(mult) < 1.0
                fate[attracting] = p
                active &= ~attracting
            if not active.any():
                break
        return fate, through_pole

    @staticmethod
    def _cycle_multiplier(rho: complex, lam: np.ndarray, mu: np.ndarray, z: np.ndarray,
                          p: int, guard: float) -> np.ndarray:
        mult = np.ones(z.shape, dtype=np.complex128)
        for _ in range(p):
            mult *= derivative_array(lam, mu, rho, z, guard)
            z = evaluate_array(lam, mu, z, guard)
        return np.where(np.isfinite(mult), mult, np.inf)

    def colorize(self, grid: RasterGrid) -> np.ndarray:
        """(height, width, 3) uint8 RGB; MMu pixels share the period colors."""
        rgb = np.empty(grid.region.shape + (3,), dtype=np.uint8)
        rgb[:] = self.LEGEND["other"]
        rgb[grid.region == SHIFT] = self.LEGEND["Shift"]
        captured = (grid.region == M_LAMBDA) | (grid.region == M_MU)
        for p in range(1, 5):
            rgb[captured & (grid.period == p)] = self.LEGEND[f"period{p}"]
        return rgb

    def render(self, job: RasterJob) -> Dict[str, Any]:
        """Classify and color a job; returns the grid, the RGB image and pixel counts."""
        results: Dict[str, Any] = {"job": job, "grid": None, "rgb": None, "counts": {},
                                   "errors": []}
        grid = self.render_parameter_plane(job)
        results["grid"] = grid
        results["rgb"] = self.colorize(grid)
        results["counts"] = grid.counts()
        if self.verbose:
            self.logger.debug(f"Pixel counts: {results['counts']}")
        return results

    def shift_samples(self, job: RasterJob) -> List[complex]:
        """Pixel-center lambdas classified Shift, in row-major order."""
        grid = self.render_parameter_plane(job)
        lam = self.lambda_grid(job)
        return [complex(v) for v in lam[grid.region == SHIFT]]
