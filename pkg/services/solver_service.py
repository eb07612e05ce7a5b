"""Newton solvers for boundary points of the shift locus.

Virtual centers are prepole parameters (the orbit of lambda reaches a pole),
parabolic parameters carry a cycle of multiplier 1, and Misiurewicz-like
parameters send lambda onto a repelling cycle.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import ATLAS_VERSION
from models.dynamics import TargetKind
from models.errors import (AtlasError, CollapsedToAttracting, InfinityFlag, NoConvergence,
                           NotRepelling)
from models.family import FamilySlice, is_infinity
from models.itinerary import Itinerary
from services.family_service import (branch_index, compose_branches, evaluate, iterate,
                                     iterate_with_derivative, make_slice, nearest_pole_index,
                                     pole)

logger = logging.getLogger(__name__)

NEWTON_STEPS = 80
FD_STEP = 1e-7
# pole distance counted as reaching the infinity flag in the orbit signature
SIGNATURE_POLE_TOLERANCE = 1e-8
# solutions this close to lambda = 0 or rho/2 are the excluded degenerate parameters
DEGENERATE_DISTANCE = 1e-6


@dataclass
class SolverResult:
    """One solved boundary point and its checks."""
    kind: TargetKind
    rho: complex
    word: str
    lam: complex
    residual: float
    cycle_point: Optional[complex] = None
    multiplier: Optional[complex] = None
    # steps until the orbit of lambda reaches the infinity flag (virtual centers)
    steps_to_infinity: Optional[int] = None
    orbit_word: List[int] = field(default_factory=list)
    tol: float = 0.0

    def to_record(self) -> Dict:
        record = {
            "kind": self.kind.value,
            "rho": [self.rho.real, self.rho.imag],
            "word": self.word,
            "lambda_re": self.lam.real,
            "lambda_im": self.lam.imag,
            "residual": self.residual,
            "tol": self.tol,
            "version": ATLAS_VERSION,
        }
        if self.cycle_point is not None:
            record["cycle_re"] = self.cycle_point.real
            record["cycle_im"] = self.cycle_point.imag
        if self.multiplier is not None:
            record["multiplier_re"] = self.multiplier.real
            record["multiplier_im"] = self.multiplier.imag
        if self.steps_to_infinity is not None:
            record["steps_to_infinity"] = self.steps_to_infinity
        if self.orbit_word:
            record["orbit_word"] = list(self.orbit_word)
        return record


def _newton(residual: Callable[[np.ndarray], np.ndarray], x: np.ndarray, tol: float,
            what: str) -> Tuple[np.ndarray, float]:
    """Damped Newton with a central-difference complex Jacobian.

    The residual is holomorphic in every unknown, so one complex difference per
    column gives the Jacobian.
    """
    x = np.array(x, dtype=complex)
    try:
        r = residual(x)
    except AtlasError as e:
        raise NoConvergence(f"{what}: residual undefined at the seed") from e
    norm = float(np.max(np.abs(r)))
    for _ in range(NEWTON_STEPS):
        if norm <= tol:
            return x, norm
        jac = np.empty((len(x), len(x)), dtype=complex)
        for k in range(len(x)):
            h = FD_STEP * max(1.0, abs(x[k]))
            e = np.zeros(len(x), dtype=complex)
            e[k] = h
            try:
                jac[:, k] = (residual(x + e) - residual(x - e)) / (2.0 * h)
            except AtlasError as err:
                raise NoConvergence(f"{what}: Jacobian undefined near {x!r}") from err
        try:
            step = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as err:
            raise NoConvergence(f"{what}: singular Jacobian at {x!r}") from err
        t = 1.0
        for _ in range(30):
            trial = x - t * step
            try:
                r_trial = residual(trial)
                n_trial = float(np.max(np.abs(r_trial)))
            except AtlasError:
                n_trial = np.inf
            if n_trial < norm or n_trial <= tol:
                break
            t *= 0.5
        else:
            raise NoConvergence(f"{what}: line search failed at residual {norm:.3e}")
        x, r, norm = trial, r_trial, n_trial
    if norm <= tol:
        return x, norm
    raise NoConvergence(f"{what}: residual {norm:.3e} after {NEWTON_STEPS} steps")


# ==================== VIRTUAL CENTERS ====================

def virtual_center_residual(rho: complex, word: Sequence[int], lam: complex) -> complex:
    """F(lambda) = f_lambda^{p-2}(lambda) - pole_{j_{p-1}}(lambda) for a word of length p - 1."""
    s = make_slice(rho, lam)
    z = iterate(s, s.lam, len(word) - 1)
    if is_infinity(z):
        raise InfinityFlag("orbit reached a pole before the last symbol")
    return z - pole(s, word[-1])


def orbit_signature(s: FamilySlice, limit: int) -> Tuple[Optional[int], List[int]]:
    """First step at which the orbit of lambda hits the infinity flag, and its branch word."""
    z = s.lam
    word: List[int] = []
    for step in range(1, limit + 1):
        word.append(branch_index(s, z))
        w = evaluate(s, z, pole_tol=SIGNATURE_POLE_TOLERANCE)
        if is_infinity(w):
            return step, word
        z = w
    return None, word


def dynamic_word(s: FamilySlice, length: int) -> List[int]:
    """Branch labels of the first length-1 orbit points of lambda, then the label of
    the pole nearest the next one.

    This is the word a virtual center close to lambda solves for, read with the
    principal branches of f_lambda rather than the model's labels.
    """
    z = s.lam
    word: List[int] = []
    for _ in range(length - 1):
        word.append(branch_index(s, z))
        z = evaluate(s, z, pole_tol=SIGNATURE_POLE_TOLERANCE)
        if is_infinity(z):
            raise InfinityFlag("orbit reached a pole before the last symbol")
    word.append(nearest_pole_index(s, z))
    return word


def virtual_center_solve(rho: complex, word: Itinerary, seed: complex, tol: float = 1e-10,
                         labels: Optional[Sequence[int]] = None) -> SolverResult:
    """Prepole parameter lambda* whose orbit reaches infinity after len(word) steps.

    `labels` overrides the pole labels the residual uses; `word` is then only
    the name recorded with the result.
    """
    if not word.is_finite:
        raise NoConvergence(f"virtual centers need a finite word, got {word}")
    symbols = tuple(labels) if labels is not None else word.preperiod
    if len(symbols) != len(word.preperiod):
        raise NoConvergence(f"labels {list(symbols)} do not match the length of {word}")
    x, norm = _newton(lambda v: np.array([virtual_center_residual(rho, symbols, v[0])]),
                      np.array([seed]), tol, f"virtual center {word}")
    lam = complex(x[0])
    if abs(lam) <= DEGENERATE_DISTANCE or abs(lam - rho / 2) <= DEGENERATE_DISTANCE:
        raise NoConvergence(f"virtual center {word} collapsed onto the degenerate parameter {lam!r}")
    steps, orbit_word = orbit_signature(make_slice(rho, lam), len(symbols) + 1)
    logger.debug(f"Virtual center {word}: lambda={lam!r}, residual={norm:.3e}, steps={steps}")
    return SolverResult(kind=TargetKind.VIRTUAL_CENTER, rho=complex(rho), word=word.format(),
                        lam=lam, residual=norm, steps_to_infinity=steps, orbit_word=orbit_word,
                        tol=tol)


# ==================== PARABOLIC PARAMETERS ====================

def parabolic_solve(rho: complex, n: int, seed_lambda: complex, seed_z: complex,
                    tol: float = 1e-9, word: str = "") -> SolverResult:
    """(lambda, z) with f_lambda^n(z) = z and (f_lambda^n)'(z) = 1."""
    if n < 1:
        raise NoConvergence("cycle length must be >= 1")

    def residual(v: np.ndarray) -> np.ndarray:
        w, d = iterate_with_derivative(make_slice(rho, v[0]), v[1], n)
        return np.array([w - v[1], d - 1.0])

    x, norm = _newton(residual, np.array([seed_lambda, seed_z]), tol, f"parabolic n={n}")
    lam, z = complex(x[0]), complex(x[1])
    _, mult = iterate_with_derivative(make_slice(rho, lam), z, n)
    if abs(mult - 1.0) > 1e-8:
        if abs(mult) < 1.0:
            raise CollapsedToAttracting(f"cycle at {z!r} has multiplier {mult!r}")
        raise NoConvergence(f"cycle at {z!r} has multiplier {mult!r}")
    if abs(z - lam) <= 1e-6:
        raise NoConvergence("parabolic cycle collapsed onto the asymptotic value")
    logger.debug(f"Parabolic n={n}: lambda={lam!r}, cycle={z!r}, residual={norm:.3e}")
    return SolverResult(kind=TargetKind.PARABOLIC, rho=complex(rho), word=word, lam=lam,
                        residual=norm, cycle_point=z, multiplier=mult, tol=tol)


# ==================== MISIUREWICZ-LIKE PARAMETERS ====================

def misiurewicz_solve(rho: complex, k: int, n: int, seed_lambda: complex, seed_z: complex,
                      tol: float = 1e-9, word: str = "") -> SolverResult:
    """(lambda, z) with f_lambda^k(lambda) = z on a repelling n-cycle."""
    if k < 1 or n < 1:
        raise NoConvergence("preperiod and period must be >= 1")

    def residual(v: np.ndarray) -> np.ndarray:
        s = make_slice(rho, v[0])
        landed = iterate(s, s.lam, k)
        back = iterate(s, v[1], n)
        if is_infinity(landed) or is_infinity(back):
            raise InfinityFlag("orbit reached a pole")
        return np.array([landed - v[1], back - v[1]])

    x, norm = _newton(residual, np.array([seed_lambda, seed_z]), tol, f"misiurewicz k={k} n={n}")
    lam, z = complex(x[0]), complex(x[1])
    _, mult = iterate_with_derivative(make_slice(rho, lam), z, n)
    if abs(mult) <= 1.0:
        raise NotRepelling(f"landing cycle at {z!r} has multiplier {mult!r}")
    logger.debug(f"Misiurewicz k={k} n={n}: lambda={lam!r}, cycle={z!r}, residual={norm:.3e}")
    return SolverResult(kind=TargetKind.MISIUREWICZ_LIKE, rho=complex(rho), word=word, lam=lam,
                        residual=norm, cycle_point=z, multiplier=mult, tol=tol)


def dynamic_periodic_point(s: FamilySlice, period: Sequence[int], max_steps: int = 500,
                           tol: float = 1e-13) -> complex:
    """Repelling periodic point of f_lambda with itinerary period-bar, by iterating its
    inverse branches; used to seed the parabolic and Misiurewicz-like solvers."""
    z = pole(s, period[0])
    for _ in range(max_steps):
        nxt = compose_branches(s, period, z)
        if abs(nxt - z) < tol * max(1.0, abs(z)):
            return nxt
        z = nxt
    return z


def solve_for_target(rho: complex, target: Itinerary, seed_lambda: complex,
                     labels: Optional[Sequence[int]] = None) -> SolverResult:
    """Dispatch on the kind of itinerary, seeding cycles from the inverse branches at seed_lambda."""
    if target.is_finite:
        return virtual_center_solve(rho, target, seed_lambda, labels=labels)
    s = make_slice(rho, seed_lambda)
    seed_z = dynamic_periodic_point(s, target.period)
    if target.is_periodic:
        return parabolic_solve(rho, len(target.period), seed_lambda, seed_z, word=target.format())
    return misiurewicz_solve(rho, len(target.preperiod), len(target.period), seed_lambda,
                             seed_z, word=target.format())
