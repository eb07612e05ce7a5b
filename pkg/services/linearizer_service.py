"""Koenigs linearization at an attracting fixed point.

phi(z) = rho^{-n} * phi_loc(f^n(z) - q) where f^n(z) is the first iterate inside
a small disk around q and phi_loc is the truncated Koenigs series at q, obtained
from the Taylor series of f by solving phi(f(q + h)) = rho * phi(q + h) term by
term.
"""

import cmath
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from config.settings import AtlasConfig
from models.dynamics import Normalization, ShiftSide
from models.errors import (InfinityFlag, NoConvergence, NotAttracting, NotInBasin,
                           OutsideInjectivityDisk)
from models.family import FamilySlice, is_infinity
from services.family_service import derivative, evaluate
from services.orbit_service import refine_cycle

logger = logging.getLogger(__name__)

SERIES_ORDER = 16
INVERSE_NEWTON_STEPS = 40
INVERSE_TOLERANCE = 1e-13
BOUNDARY_SHRINK = 1e-6


def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)[: len(a)]


def _series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    for n in range(len(a)):
        acc = a[n] - np.dot(out[:n], b[n:0:-1]) if n else a[0]
        out[n] = acc / b[0]
    return out


def map_taylor_series(s: FamilySlice, q: complex, order: int = SERIES_ORDER) -> np.ndarray:
    """Coefficients of f(q + h) - q in h (index 0 is ~0)."""
    k = np.arange(order + 1)
    exp_series = np.array([2.0 ** n / math.factorial(n) for n in k], dtype=np.complex128)
    if q.real >= 0.0:
        # f = (1 - v)/(1/lambda - v/mu), v = e^{-2q} e^{-2h}
        v = cmath.exp(-2.0 * q) * exp_series * (-1.0) ** k
        num = -v
        num[0] += 1.0
        den = -v / s.mu
        den[0] += 1.0 / s.lam
    else:
        u = cmath.exp(2.0 * q) * exp_series
        num = u.copy()
        num[0] -= 1.0
        den = u / s.lam
        den[0] -= 1.0 / s.mu
    series = _series_div(num, den)
    series[0] -= q
    return series


def koenigs_series(f_series: np.ndarray) -> np.ndarray:
    """Coefficients a_k of phi_loc(h) = sum a_k h^k with a_1 = 1."""
    order = len(f_series) - 1
    rho = f_series[1]
    f_series = f_series.copy()
    f_series[0] = 0.0
    a = np.zeros(order + 1, dtype=np.complex128)
    a[1] = 1.0
    powers = [None, f_series.copy()]
    for k in range(2, order + 1):
        powers.append(_series_mul(powers[-1], f_series))
    for n in range(2, order + 1):
        acc = sum(a[k] * powers[k][n] for k in range(1, n))
        a[n] = acc / (rho - rho ** n)
    return a


@dataclass(frozen=True)
class Linearizer:
    """Koenigs map at an attracting fixed point, phi = scale * phi_loc-extension."""
    slice: FamilySlice
    fixed_point: complex
    multiplier: complex
    normalization: Normalization
    r0: float
    trap_radius: float
    scale: complex
    coefficients: Tuple[complex, ...]
    distinguished: complex
    max_iter: int = 4000

    def _local(self, h: complex) -> Tuple[complex, complex]:
        value = 0j
        slope = 0j
        for k in range(len(self.coefficients) - 1, 0, -1):
            value = value * h + self.coefficients[k]
            slope = slope * h + k * self.coefficients[k]
        # Horner above produced sum a_k h^(k-1) and sum k a_k h^(k-1)
        return value * h, slope

    def _descend(self, z: complex, with_derivative: bool = False):
        q = self.fixed_point
        w = complex(z)
        d = 1.0 + 0j
        n = 0
        while abs(w - q) > self.trap_radius:
            if n >= self.max_iter or (abs(w) < self.trap_radius < abs(q)):
                raise NotInBasin(f"{z!r} did not reach the fixed point {q!r}")
            if with_derivative:
                try:
                    d *= derivative(self.slice, w)
                except InfinityFlag as e:
                    raise NotInBasin(f"orbit of {z!r} hits a pole") from e
            w = evaluate(self.slice, w)
            if is_infinity(w):
                raise NotInBasin(f"orbit of {z!r} hits a pole")
            n += 1
        return w, n, d

    def koenigs(self, z: complex) -> complex:
        """phi(z), continued through the basin by phi(z) = rho^{-n} phi(f^n z)."""
        w, n, _ = self._descend(z)
        value, _ = self._local(w - self.fixed_point)
        return self.scale * value / self.multiplier ** n

    def koenigs_with_derivative(self, z: complex) -> Tuple[complex, complex]:
        w, n, d = self._descend(z, with_derivative=True)
        value, slope = self._local(w - self.fixed_point)
        factor = self.scale / self.multiplier ** n
        return factor * value, factor * slope * d

    def koenigs_inverse(self, zeta: complex) -> complex:
        """The point of the injectivity domain with phi(z) = zeta, |zeta| < r0."""
        zeta = complex(zeta)
        if abs(zeta) >= self.r0:
            raise OutsideInjectivityDisk(f"|zeta| = {abs(zeta)!r} >= r0 = {self.r0!r}")
        if zeta == 0:
            return self.fixed_point
        steps = max(4, int(math.ceil(16 * abs(zeta) / self.r0)))
        z = self.fixed_point + (zeta / steps) / self.scale
        for k in range(1, steps + 1):
            target = zeta * k / steps
            z = self._newton_to(z, target, final=(k == steps))
        return z

    def _newton_to(self, z: complex, target: complex, final: bool) -> complex:
        tol = INVERSE_TOLERANCE * max(1.0, abs(target))
        for _ in range(INVERSE_NEWTON_STEPS):
            try:
                value, slope = self.koenigs_with_derivative(z)
            except NotInBasin as e:
                raise NoConvergence(f"Koenigs inverse left the basin near {z!r}") from e
            err = value - target
            if abs(err) <= tol:
                return z
            if slope == 0:
                raise NoConvergence("vanishing Koenigs derivative")
            z = z - err / slope
        if final or not math.isfinite(abs(z)):
            value = self.koenigs(z)
            if abs(value - target) <= 1e3 * tol:
                return z
            raise NoConvergence(f"Koenigs inverse did not converge for {target!r}")
        return z

    def in_injectivity_domain(self, z: complex) -> bool:
        """True when z lies in the domain mapped injectively onto |zeta| < r0."""
        zeta = self.koenigs(z)
        if abs(zeta) >= self.r0:
            return False
        try:
            back = self.koenigs_inverse(zeta)
        except (NoConvergence, OutsideInjectivityDisk):
            return False
        return abs(back - z) <= 1e-8 * max(1.0, abs(z))

    def level_and_angle(self, z: complex) -> Tuple[float, float, int]:
        """(r, t, n): level |phi(z)|, angle of phi(f^n z), steps n into the disk."""
        zeta = self.koenigs(z)
        w = complex(z)
        n = 0
        while not self.in_injectivity_domain(w):
            w = evaluate(self.slice, w)
            n += 1
            if is_infinity(w) or n > self.max_iter:
                raise NotInBasin(f"{z!r} never enters the injectivity domain")
        landed = zeta * self.multiplier ** n
        return abs(zeta), _principal_angle(landed), n


def _principal_angle(zeta: complex) -> float:
    """Argument in [-pi, pi)."""
    t = cmath.phase(zeta)
    return -math.pi if t >= math.pi else t


def _local_disk_radius(coefficients: np.ndarray, cap: float) -> float:
    tail = [abs(c) ** (-1.0 / (k - 1)) for k, c in enumerate(coefficients) if k >= 2 and c != 0]
    radius = min(tail[-4:]) if tail else cap
    return min(cap, 0.1 * radius)


def build_linearizer(s: FamilySlice, fixed_point_seed: complex,
                     normalization: Normalization = Normalization.DERIVATIVE_ONE,
                     r0: Optional[float] = None, distinguished: Optional[complex] = None,
                     config: Optional[AtlasConfig] = None) -> Linearizer:
    """Refine the fixed point, build the Koenigs series and normalize.

    DerivativeOne: phi'(q) = 1 and r0 = |phi(z0)| where z0 is the asymptotic
    value of smallest level (or `distinguished`). AsymptoticValueToR0: phi is
    rescaled so that phi(z0) = r0, with z0 = mu unless given.
    """
    config = config or AtlasConfig()
    q, mult = refine_cycle(s, fixed_point_seed, 1)
    if abs(mult) >= 1.0:
        raise NotAttracting(f"fixed point {q!r} has multiplier modulus {abs(mult)!r}")
    coefficients = koenigs_series(map_taylor_series(s, q))
    coefficients[1] = 1.0
    radius = _local_disk_radius(coefficients, cap=0.05 * max(1.0, abs(q)))
    base = Linearizer(slice=s, fixed_point=q, multiplier=mult, normalization=normalization,
                      r0=math.inf, trap_radius=radius, scale=1.0 + 0j,
                      coefficients=tuple(complex(c) for c in coefficients),
                      distinguished=0j, max_iter=max(4000, config.max_iter))

    if normalization == Normalization.DERIVATIVE_ONE:
        if distinguished is None:
            levels = []
            for value in (s.lam, s.mu):
                try:
                    levels.append((abs(base.koenigs(value)), value))
                except NotInBasin:
                    continue
            if not levels:
                raise NotInBasin("no asymptotic value is attracted to the fixed point")
            level, distinguished = min(levels, key=lambda item: item[0])
        else:
            level = abs(base.koenigs(distinguished))
        chosen_r0 = level if r0 is None else r0
        return replace(base, r0=chosen_r0, distinguished=distinguished)

    if r0 is None:
        raise ValueError("AsymptoticValueToR0 needs the target radius r0")
    distinguished = s.mu if distinguished is None else distinguished
    raw = base.koenigs(distinguished)
    if raw == 0:
        raise NotInBasin("distinguished asymptotic value sits at the fixed point")
    return replace(base, r0=r0, scale=r0 / raw, distinguished=distinguished)


def shift_side(s: FamilySlice, config: Optional[AtlasConfig] = None,
               tie_tolerance: float = 1e-9) -> ShiftSide:
    """S0_lambda when mu bounds the injectivity domain of the origin, S0_mu when lambda does."""
    lin = build_linearizer(s, 0j, Normalization.DERIVATIVE_ONE, r0=1.0, distinguished=s.mu,
                           config=config)
    level_lam = abs(lin.koenigs(s.lam))
    level_mu = abs(lin.koenigs(s.mu))
    if abs(level_lam - level_mu) <= tie_tolerance * max(level_lam, level_mu):
        return ShiftSide.S_STAR
    return ShiftSide.S0_LAMBDA if level_mu < level_lam else ShiftSide.S0_MU
