"""Service for forward-orbit classification of asymptotic values."""

import logging
from typing import Optional, Tuple

from config.settings import AtlasConfig, IterationBudget
from models.dynamics import OrbitKind, OrbitVerdict, ParameterClass, Region
from models.errors import AtlasError, InfinityFlag, NoConvergence
from models.family import FamilySlice, is_infinity
from services.family_service import derivative, evaluate, iterate, make_slice

NEWTON_STEPS = 60
CYCLE_RESIDUAL = 1e-12
CONTRACTION_SLACK = 1e-3
CONTRACTION_CHECKS = 8


def refine_cycle(s: FamilySlice, seed: complex, p: int) -> Tuple[complex, complex]:
    """Newton on f^p(z) - z; returns (cycle point, multiplier of the cycle)."""
    if p < 1:
        raise ValueError("period must be >= 1")
    z = complex(seed)
    for _ in range(NEWTON_STEPS):
        try:
            w, d = _orbit_and_derivative(s, z, p)
        except InfinityFlag as e:
            raise NoConvergence(f"cycle refinement hit a pole from {seed!r}") from e
        g = w - z
        if abs(g) <= CYCLE_RESIDUAL * max(1.0, abs(z)):
            return z, d
        dg = d - 1.0
        if dg == 0:
            raise NoConvergence("singular Newton step in cycle refinement")
        step = g / dg
        # damp wild steps, orbits near poles make g very steep
        if abs(step) > 1.0:
            step = step / abs(step)
        z = z - step
    raise NoConvergence(f"no period-{p} cycle near {seed!r} after {NEWTON_STEPS} steps")


def _orbit_and_derivative(s: FamilySlice, z: complex, p: int) -> Tuple[complex, complex]:
    d = 1.0 + 0j
    w = z
    for _ in range(p):
        d *= derivative(s, w)
        w = evaluate(s, w)
        if is_infinity(w):
            raise InfinityFlag("orbit reached a pole")
    return w, d


def minimal_period(s: FamilySlice, z: complex, p: int, tol: float = 1e-9) -> int:
    for d in range(1, p):
        if p % d == 0:
            w = iterate(s, z, d)
            if not is_infinity(w) and abs(w - z) <= tol * max(1.0, abs(z)):
                return d
    return p


class OrbitClassifier:
    """Classifies orbits and parameters of the fixed-rho family."""

    def __init__(self, config: Optional[AtlasConfig] = None, verbose: bool = False):
        self.config = config or AtlasConfig()
        self.verbose = verbose
        self.logger = logging.getLogger(__name__)

    def classify_orbit(self, s: FamilySlice, z0: complex, max_iter: Optional[int] = None,
                       tol: float = 1e-6, pole_successor: Optional[complex] = None) -> OrbitVerdict:
        """Brent cycle detection on the orbit of z0 with an origin trap.

        The successor of the infinity flag is pole_successor (lambda by default),
        the asymptotic value of the tract the orbit is taken to have entered.
        """
        if max_iter is None:
            max_iter = self.config.max_iter
        if max_iter < 1 or tol <= 0:
            raise ValueError("max_iter must be >= 1 and tol > 0")
        successor = s.lam if pole_successor is None else pole_successor
        guard, pole_tol = self.config.overflow_guard, self.config.pole_tolerance
        r_trap = self.config.trap_radius(s.rho, s.lam, s.mu)
        through_pole = False

        def step(z: complex) -> complex:
            nonlocal through_pole
            w = evaluate(s, z, guard=guard, pole_tol=pole_tol)
            if is_infinity(w):
                through_pole = True
                return successor
            return w

        z = complex(z0)
        if abs(z) < r_trap and self._contracts(s, z):
            return OrbitVerdict(OrbitKind.ATTRACTED_TO_ORIGIN, period=1, multiplier=s.rho,
                                iterations_used=0, representative=0j, through_pole=through_pole)

        power = lam_len = 1
        tortoise = z
        hare = step(z)
        for i in range(1, max_iter + 1):
            if abs(hare) < r_trap and self._contracts(s, hare):
                return OrbitVerdict(OrbitKind.ATTRACTED_TO_ORIGIN, period=1, multiplier=s.rho,
                                    iterations_used=i, representative=0j, through_pole=through_pole)
            if abs(hare - tortoise) < tol:
                verdict = self._try_cycle(s, hare, lam_len, i, through_pole)
                if verdict is not None:
                    return verdict
            if power == lam_len:
                tortoise = hare
                power *= 2
                lam_len = 0
            hare = step(hare)
            lam_len += 1

        if self.verbose:
            self.logger.debug(f"Orbit of {z0!r} unresolved after {max_iter} iterations")
        return OrbitVerdict(OrbitKind.UNRESOLVED, iterations_used=max_iter,
                            representative=hare, through_pole=through_pole)

    def _contracts(self, s: FamilySlice, z: complex) -> bool:
        """Monotone trap check: iterates keep shrinking by about |rho|."""
        bound = abs(s.rho) * (1.0 + CONTRACTION_SLACK)
        for _ in range(CONTRACTION_CHECKS):
            if z == 0:
                return True
            w = evaluate(s, z, guard=self.config.overflow_guard, pole_tol=self.config.pole_tolerance)
            if is_infinity(w) or abs(w) > bound * abs(z):
                return False
            z = w
        return True

    def _try_cycle(self, s: FamilySlice, seed: complex, p: int, i: int,
                   through_pole: bool) -> Optional[OrbitVerdict]:
        try:
            point, mult = refine_cycle(s, seed, p)
            q = minimal_period(s, point, p)
            if q != p:
                point, mult = refine_cycle(s, point, q)
                p = q
        except NoConvergence:
            return None
        if abs(mult) >= 1.0:
            return None
        if abs(point) < 1e-9:
            return OrbitVerdict(OrbitKind.ATTRACTED_TO_ORIGIN, period=1, multiplier=s.rho,
                                iterations_used=i, representative=0j, through_pole=through_pole)
        return OrbitVerdict(OrbitKind.ATTRACTED_TO_CYCLE, period=p, multiplier=mult,
                            iterations_used=i, representative=point, through_pole=through_pole)

    def classify_parameter(self, rho: complex, lam: complex,
                           budget: Optional[IterationBudget] = None,
                           resolve_side: bool = False) -> ParameterClass:
        """Region of lambda: Shift, MLambda, MMu or Unresolved."""
        budget = budget or IterationBudget(max_iter=self.config.max_iter)
        s = make_slice(rho, lam)
        v_lam = self.classify_orbit(s, s.lam, budget.max_iter, budget.tol, pole_successor=s.lam)
        v_mu = self.classify_orbit(s, s.mu, budget.max_iter, budget.tol, pole_successor=s.mu)
        ambiguous = v_lam.through_pole or v_mu.through_pole
        period_lambda = v_lam.period if v_lam.kind == OrbitKind.ATTRACTED_TO_CYCLE else None
        period_mu = v_mu.period if v_mu.kind == OrbitKind.ATTRACTED_TO_CYCLE else None

        if ambiguous:
            region = Region.UNRESOLVED
        elif v_lam.kind == OrbitKind.ATTRACTED_TO_ORIGIN and v_mu.kind == OrbitKind.ATTRACTED_TO_ORIGIN:
            region = Region.SHIFT
        elif period_lambda is not None:
            region = Region.M_LAMBDA
        elif period_mu is not None:
            region = Region.M_MU
        else:
            region = Region.UNRESOLVED

        side = None
        if resolve_side and region == Region.SHIFT:
            from services.linearizer_service import shift_side
            side = shift_side(s, self.config)
        return ParameterClass(region=region, period_lambda=period_lambda, period_mu=period_mu,
                              shift_side=side, ambiguous=ambiguous)

    def is_shift(self, rho: complex, lam: complex, budget: Optional[IterationBudget] = None) -> bool:
        try:
            return self.classify_parameter(rho, lam, budget).region == Region.SHIFT
        except AtlasError:
            return False
