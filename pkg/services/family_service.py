"""Evaluation of f(z) = (e^z - e^-z)/(e^z/lambda - e^-z/mu) and its inverse branches.

With u = e^{2z} the map is the Moebius transformation u -> (u - 1)/(u/lambda - 1/mu),
so it is pi*i periodic, has poles where u = lambda/mu, and every branch of the
inverse is R_j(w) = 1/2 Log((w/mu - 1)/(w/lambda - 1)) + pi*i*j.
"""

import cmath
import math
from functools import lru_cache
from typing import Optional

import numpy as np

from config.settings import AtlasConfig
from models.errors import AsymptoticValueHit, InfinityFlag, Unresolvable
from models.family import INFINITY, FamilySlice, is_infinity

PI_I = complex(0.0, math.pi)


@lru_cache(maxsize=1)
def family_config() -> AtlasConfig:
    """Environment tunables used when a caller passes no guard, pole tolerance or window."""
    return AtlasConfig()


def principal_log(x: complex) -> complex:
    """Log with the imaginary part in (-pi, pi], reading a signed zero as +0.

    On real slices lambda/mu comes out as -2-0j and cmath.log would return -pi.
    """
    return cmath.log(complex(x.real, x.imag + 0.0))


def make_slice(rho: complex, lam: complex) -> FamilySlice:
    """Build (rho, lambda, mu) with mu solved from the multiplier constraint."""
    return FamilySlice.make(rho, lam)


def pole(s: FamilySlice, j: int) -> complex:
    """The j-th pole 1/2 Log(lambda/mu) + pi*i*j."""
    return 0.5 * principal_log(s.lam / s.mu) + j * PI_I


def nearest_pole_index(s: FamilySlice, z: complex) -> int:
    return int(round((z.imag - pole(s, 0).imag) / math.pi))


def _near_pole(s: FamilySlice, z: complex, tol: float) -> bool:
    return abs(z - pole(s, nearest_pole_index(s, z))) < tol


def evaluate(s: FamilySlice, z: complex, guard: Optional[float] = None,
             pole_tol: Optional[float] = None) -> complex:
    """f(z), the asymptotic value beyond the overflow guard, INFINITY at poles."""
    guard = family_config().overflow_guard if guard is None else guard
    pole_tol = family_config().pole_tolerance if pole_tol is None else pole_tol
    if is_infinity(z):
        return INFINITY
    if z.real > guard:
        return s.lam
    if z.real < -guard:
        return s.mu
    if _near_pole(s, z, pole_tol):
        return INFINITY
    if z.real >= 0.0:
        v = cmath.exp(-2.0 * z)
        num = 1.0 - v
        den = 1.0 / s.lam - v / s.mu
    else:
        u = cmath.exp(2.0 * z)
        num = u - 1.0
        den = u / s.lam - 1.0 / s.mu
    if den == 0:
        return INFINITY
    return num / den


def derivative(s: FamilySlice, z: complex, guard: Optional[float] = None,
               pole_tol: Optional[float] = None) -> complex:
    """f'(z) = (4/rho) u/(u/lambda - 1/mu)^2 with u = e^{2z}."""
    guard = family_config().overflow_guard if guard is None else guard
    pole_tol = family_config().pole_tolerance if pole_tol is None else pole_tol
    if is_infinity(z) or _near_pole(s, z, pole_tol):
        raise InfinityFlag(f"derivative requested at a pole: {z!r}")
    if abs(z.real) > guard:
        return 0j
    if z.real >= 0.0:
        v = cmath.exp(-2.0 * z)
        den = 1.0 / s.lam - v / s.mu
        return (4.0 / s.rho) * v / (den * den)
    u = cmath.exp(2.0 * z)
    den = u / s.lam - 1.0 / s.mu
    return (4.0 / s.rho) * u / (den * den)


def offset_from_asymptotic_value(s: FamilySlice, z: complex) -> complex:
    """f(z) - (asymptotic value of the tract containing z), free of cancellation.

    For Re z >= 0 this is (lambda/mu - 1) v/(1/lambda - v/mu) with v = e^{-2z};
    for Re z < 0 it is f(z) - mu written the same way in u = e^{2z}.
    """
    if z.real >= 0.0:
        v = cmath.exp(-2.0 * z)
        return (s.lam / s.mu - 1.0) * v / (1.0 / s.lam - v / s.mu)
    u = cmath.exp(2.0 * z)
    return (1.0 - s.mu / s.lam) * u / (u / s.lam - 1.0 / s.mu)


def log_offset_from_asymptotic_value(s: FamilySlice, z: complex) -> complex:
    """Log of offset_from_asymptotic_value, finite even when e^{2z} underflows.

    The imaginary part is only meaningful modulo 2*pi.
    """
    if z.real >= 0.0:
        v = cmath.exp(-2.0 * z)
        return cmath.log(s.lam / s.mu - 1.0) - 2.0 * z - cmath.log(1.0 / s.lam - v / s.mu)
    u = cmath.exp(2.0 * z)
    return cmath.log(1.0 - s.mu / s.lam) + 2.0 * z - cmath.log(u / s.lam - 1.0 / s.mu)


def _wrap_log(value: complex) -> complex:
    """Reduce the imaginary part into (-pi, pi], the principal branch."""
    im = math.pi - math.fmod(math.pi - value.imag, 2.0 * math.pi)
    if im > math.pi:
        im -= 2.0 * math.pi
    elif im <= -math.pi:
        im += 2.0 * math.pi
    return complex(value.real, im)


def inverse_branch_near(s: FamilySlice, j: int, value: complex, log_eps: complex) -> complex:
    """R_j(value + eps) for an asymptotic value and eps = exp(log_eps) below rounding.

    Only the leading order in eps is kept, so callers switch to this form once
    |eps| drops under about 1e-8 relative to the asymptotic value.
    """
    eps = cmath.exp(log_eps)
    if value == s.lam:
        log_ratio = cmath.log((s.lam + eps) / s.mu - 1.0) + cmath.log(s.lam) - log_eps
    elif value == s.mu:
        log_ratio = log_eps - cmath.log(s.mu) - cmath.log((s.mu + eps) / s.lam - 1.0)
    else:
        raise ValueError(f"{value!r} is not an asymptotic value of the slice")
    return 0.5 * _wrap_log(log_ratio) + j * PI_I


def inverse_branch(s: FamilySlice, j: int, w: complex) -> complex:
    """R_j(w), the branch of f^{-1} labeled by j; R_j(INFINITY) is the pole p_j."""
    if is_infinity(w):
        return pole(s, j)
    scale = max(1.0, abs(w))
    if abs(w - s.lam) <= 1e-15 * scale or abs(w - s.mu) <= 1e-15 * scale:
        raise AsymptoticValueHit(f"{w!r} is an asymptotic value and has no preimage")
    ratio = (w / s.mu - 1.0) / (w / s.lam - 1.0)
    return 0.5 * principal_log(ratio) + j * PI_I


def branch_index(s: FamilySlice, z: complex, window: Optional[int] = None,
                 guard: Optional[float] = None) -> int:
    """The j with R_j(f(z)) = z, confirmed by the residual test."""
    window = family_config().branch_window if window is None else window
    guard = family_config().overflow_guard if guard is None else guard
    if abs(z.real) > guard:
        # deep in a tract: R_j covers Im in pi*j + (-pi/2, pi/2]
        return int(math.floor(z.imag / math.pi + 0.5))
    w = evaluate(s, z, guard=guard)
    if is_infinity(w):
        return nearest_pole_index(s, z)
    tol = 1e-8 * max(1.0, abs(z))
    try:
        base = inverse_branch(s, 0, w)
    except AsymptoticValueHit:
        return int(math.floor(z.imag / math.pi + 0.5))
    guess = int(round((z.imag - base.imag) / math.pi))
    candidates = [guess, guess - 1, guess + 1]
    candidates += [j for j in range(-window, window + 1) if j not in candidates]
    for j in candidates:
        if abs(base + j * PI_I - z) <= tol:
            return j
    raise Unresolvable(f"no branch within |j| <= {window} reproduces {z!r}")


def compose_branches(s: FamilySlice, word, w: complex) -> complex:
    """R_{j_1} o ... o R_{j_n}(w) for word = (j_1, ..., j_n)."""
    z = w
    for j in reversed(tuple(word)):
        z = inverse_branch(s, j, z)
    return z


def iterate(s: FamilySlice, z: complex, n: int) -> complex:
    for _ in range(n):
        z = evaluate(s, z)
        if is_infinity(z):
            return INFINITY
    return z


def iterate_with_derivative(s: FamilySlice, z: complex, n: int):
    """(f^n(z), (f^n)'(z)) by the chain rule."""
    d = 1.0 + 0j
    for _ in range(n):
        d *= derivative(s, z)
        z = evaluate(s, z)
        if is_infinity(z):
            raise InfinityFlag("orbit reached a pole")
    return z, d


def evaluate_array(lam: np.ndarray, mu: np.ndarray, z: np.ndarray,
                   guard: Optional[float] = None) -> np.ndarray:
    """Vectorized f for raster work: lambda, mu and z broadcast together.

    Poles produce non-finite entries which callers treat as the infinity flag.
    """
    guard = family_config().overflow_guard if guard is None else guard
    z = np.asarray(z, dtype=np.complex128)
    right = z.real >= 0.0
    zc = np.clip(z.real, -guard, guard) + 1j * z.imag
    with np.errstate(all="ignore"):
        e = np.exp(np.where(right, -2.0 * zc, 2.0 * zc))
        num = np.where(right, 1.0 - e, e - 1.0)
        den = np.where(right, 1.0 / lam - e / mu, e / lam - 1.0 / mu)
        out = num / den
    out = np.where(z.real > guard, lam, out)
    out = np.where(z.real < -guard, mu, out)
    return out


def derivative_array(lam: np.ndarray, mu: np.ndarray, rho: complex, z: np.ndarray,
                     guard: Optional[float] = None) -> np.ndarray:
    guard = family_config().overflow_guard if guard is None else guard
    z = np.asarray(z, dtype=np.complex128)
    right = z.real >= 0.0
    zc = np.clip(z.real, -guard, guard) + 1j * z.imag
    with np.errstate(all="ignore"):
        e = np.exp(np.where(right, -2.0 * zc, 2.0 * zc))
        den = np.where(right, 1.0 / lam - e / mu, e / lam - 1.0 / mu)
        out = (4.0 / rho) * e / (den * den)
    return np.where(np.abs(z.real) > guard, 0.0, out)


def central_difference(s: FamilySlice, z: complex, h: float = 1e-5) -> Optional[complex]:
    """(f(z+h) - f(z-h))/2h, or None if either side is a pole."""
    a = evaluate(s, z + h)
    b = evaluate(s, z - h)
    if is_infinity(a) or is_infinity(b):
        return None
    return (a - b) / (2.0 * h)
