"""Service for the parameter-plane atlas of the shift locus.

This service:
1. Evaluates E(lambda) = phi0^{-1}(phi_lambda(lambda)), carried along the model branches
2. Inverts E by Newton iteration from a Shift seed
3. Seeds the inversion from a coarse raster of the shift locus
4. Transfers model tree paths into the lambda plane by continuation

The conjugacy xi_lambda sends the mu tract of f_lambda onto the lambda_0 tract
of Q, which turns the stack of branch strips upside down: xi o R_j = R_{-j} o xi.
Words read in the lambda plane are therefore mirrored before the model
branches are applied.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import AtlasConfig, IterationBudget
from models.dynamics import (FatouCoordinate, Normalization, RasterJob, TargetKind, TracedPath,
                             TreePath)
from models.errors import (AtlasError, ConfigError, ContinuationStalled, InfinityFlag,
                           LeftShiftLocus, NoConvergence, NotAttracting, NotInBasin,
                           NotInShiftLocus, OutsideInjectivityDisk, WrongNormalizationSide)
from models.family import FamilySlice, is_infinity
from models.itinerary import Itinerary
from services.family_service import (branch_index, compose_branches, evaluate,
                                     inverse_branch_near, iterate,
                                     log_offset_from_asymptotic_value, make_slice,
                                     offset_from_asymptotic_value)
from services.linearizer_service import Linearizer, build_linearizer
from services.model_service import DEEP_OFFSET, MAX_CHART_DEPTH, ModelMap, tree_path
from services.orbit_service import OrbitClassifier
from services.render_service import ParameterPlaneRenderer
from services.solver_service import dynamic_word, solve_for_target

SIDE_TIE = 1e-9
FD_STEP = 1e-7
NEWTON_STEPS = 40
LINE_SEARCH_STEPS = 20
SEED_WINDOW = (-2.0, 2.0, -2.0, 2.0)
SEED_RESOLUTION = (64, 64)
SEED_TRIES = 8
MIN_SAMPLES_PER_BRANCH = 32
STALL_FRACTION = 1e-6
# chart offsets below this fraction of r0 are matched in log form
LOG_CHART_SWITCH = 1e-3
# below this |delta| / max(1, |mu|) the chart offset of mu + delta comes from the local
# expansion phi(mu + delta) - r0 = phi'(mu) delta (1 + phi''(mu)/(2 phi'(mu)) delta)
LINEAR_OFFSET = 1e-6
CURVATURE_STEP = 1e-4
TRACE_ACCEPT = 1e-7
# infinite words: branches added per extension and the agreement that ends it
DEPTH_STEP = 8
LANDING_TOLERANCE = 2.5e-4
MIN_LANDING_NODES = 12


def mirror(word: Sequence[int]) -> List[int]:
    """Lambda-plane branch labels as model labels."""
    return [-j for j in word]


def landing_estimate(nodes: Sequence[complex], parabolic: bool) -> complex:
    """Limit of the traced lambdas at successive period nodes.

    Toward a Misiurewicz-like point the nodes converge geometrically and
    Aitken's delta-squared on the last three nodes gives the limit. Toward a
    parabolic point they creep in like 1/k^2 in the node count k, so the later
    two thirds of the nodes are fitted by least squares to
    L + a/k^2 + b/k^3 + c/k^4.
    """
    if len(nodes) < 3:
        return complex(nodes[-1])
    if parabolic:
        start = len(nodes) // 3
        if len(nodes) - start < 6:
            return complex(nodes[-1])
        k = np.arange(start + 1, len(nodes) + 1, dtype=float)
        basis = np.stack([np.ones_like(k), k ** -2, k ** -3, k ** -4], axis=1).astype(complex)
        coefficients, *_ = np.linalg.lstsq(basis, np.asarray(nodes[start:], dtype=complex),
                                           rcond=None)
        return complex(coefficients[0])
    x0, x1, x2 = (complex(x) for x in nodes[-3:])
    denominator = x2 - 2.0 * x1 + x0
    if denominator == 0 or abs(x2 - x1) >= abs(x1 - x0):
        return x2
    return x2 - (x2 - x1) ** 2 / denominator


@dataclass(frozen=True)
class EPoint:
    """E(lambda) with the data gathered on the way."""
    lam: complex
    value: complex
    # |phi_lambda(lambda)| with phi_lambda(mu) normalized to r0
    level: float
    # model labels of the branches that carry the landed point back to E(lambda)
    word: Tuple[int, ...]
    # rotated chart value of the landed point, in the model's units
    landed: complex
    # True when the orbit of lambda ran deep into the mu tract
    deep: bool = False

    @property
    def lambda_word(self) -> Tuple[int, ...]:
        """The same word in the principal labels of f_lambda."""
        return tuple(mirror(self.word))


@dataclass(frozen=True)
class ChartTarget:
    """What a traced lambda has to match for one model sample.

    Plain targets fix rotation * phi_lambda(lambda) = value. Log targets fix
    log(rotation * (phi_lambda(f^{steps+1}(lambda)) - r0)) = value, which keeps
    its resolution when the model sample sits far out in a tract.
    """
    value: complex
    log_form: bool = False
    steps: int = 0


@dataclass
class _Continuation:
    """Last two solutions of a continuation and the step between them."""
    current: complex
    previous: Optional[complex] = None
    last_step: float = 1.0

    def predict(self, step: float) -> complex:
        if self.previous is None:
            return self.current
        return self.current + (self.current - self.previous) * (step / self.last_step)

    def accept(self, lam: complex, step: float) -> None:
        self.previous, self.current, self.last_step = self.current, lam, step


class ParameterAtlas:
    """E-map, its inverse and the accessibility tracer for one model map."""

    def __init__(self, model: ModelMap, config: Optional[AtlasConfig] = None,
                 verbose: bool = False):
        self.model = model
        self.config = config or AtlasConfig()
        self.verbose = verbose
        self.logger = logging.getLogger(__name__)
        self.classifier = OrbitClassifier(self.config)
        # phi_lambda(mu) = r0 is turned into phi0(lambda_0) by this unit factor
        self.rotation = model.boundary_value / model.r0
        self._seed_points: Optional[List[EPoint]] = None

    # ==================== E MAP ====================

    def _linearizer(self, s: FamilySlice) -> Linearizer:
        try:
            return build_linearizer(s, 0j, Normalization.ASYMPTOTIC_VALUE_TO_R0, r0=self.model.r0,
                                    distinguished=s.mu, config=self.config)
        except (NotInBasin, NoConvergence, NotAttracting) as e:
            raise NotInShiftLocus(f"mu = {s.mu!r} is not attracted to the origin") from e

    def _shift_slice(self, lam: complex) -> Tuple[FamilySlice, Linearizer]:
        try:
            s = make_slice(self.model.rho, lam)
        except AtlasError as e:
            raise NotInShiftLocus(str(e)) from e
        return s, self._linearizer(s)

    def evaluate(self, lam: complex) -> EPoint:
        """E(lambda) for lambda in S0_lambda."""
        m = self.model
        s, lin = self._shift_slice(lam)
        try:
            level = abs(lin.koenigs(s.lam))
        except NotInBasin as e:
            raise NotInShiftLocus(f"lambda = {lam!r} is not attracted to the origin") from e
        if level <= m.r0 * (1.0 + SIDE_TIE):
            raise WrongNormalizationSide(f"lambda = {lam!r} is not in S0_lambda")

        rho_abs = abs(m.rho)
        word: List[int] = []
        z = s.lam
        for step in range(MAX_CHART_DEPTH):
            if z.real < 0.0 and abs(offset_from_asymptotic_value(s, z)) < DEEP_OFFSET * max(1.0, abs(s.mu)):
                return self._deep_point(s, lin, z, word, level)
            if level * rho_abs ** step < m.r0 and lin.in_injectivity_domain(z):
                landed = self.rotation * lin.koenigs(z)
                try:
                    x = m.lin.koenigs_inverse(landed)
                except (OutsideInjectivityDisk, NoConvergence) as e:
                    raise NotInShiftLocus(f"landed value {landed!r} has no model preimage") from e
                labels = mirror(word)
                return EPoint(lam=complex(lam), value=compose_branches(m.slice, labels, x),
                              level=level, word=tuple(labels), landed=landed)
            word.append(branch_index(s, z))
            z = evaluate(s, z)
            if is_infinity(z):
                raise NotInShiftLocus(f"orbit of lambda = {lam!r} reaches a pole")
        raise NotInShiftLocus(f"orbit of lambda = {lam!r} does not land within {MAX_CHART_DEPTH} steps")

    def _deep_point(self, s: FamilySlice, lin: Linearizer, z: complex, word: List[int],
                    level: float) -> EPoint:
        """f(z) = mu + delta with delta below rounding: carry log(delta) to the model tract.

        To first order psi0(phi_lambda(mu + delta)) = lambda_0 + eps with
        eps = rotation * phi_lambda'(mu) * delta / phi0'(lambda_0).
        """
        m = self.model
        # deep in a tract R_j covers Im in pi*j + (-pi/2, pi/2]
        j = int(math.floor(z.imag / math.pi + 0.5))
        _, slope = lin.koenigs_with_derivative(s.mu)
        log_delta = log_offset_from_asymptotic_value(s, z)
        log_eps = log_delta + cmath.log(self.rotation * slope) - cmath.log(m.boundary_slope)
        w = inverse_branch_near(m.slice, -j, m.lambda0, log_eps)
        labels = mirror(word)
        return EPoint(lam=complex(s.lam), value=compose_branches(m.slice, labels, w), level=level,
                      word=tuple(labels + [-j]), landed=m.boundary_value, deep=True)

    def E_map(self, lam: complex) -> complex:
        return self.evaluate(lam).value

    def parameter_coordinate(self, lam: complex) -> FatouCoordinate:
        """(X_{j_n}, r, theta) of lambda read in its own dynamical plane."""
        point = self.evaluate(lam)
        t = cmath.phase(point.landed)
        if t >= math.pi:
            t = -math.pi
        return FatouCoordinate.from_angle(point.word, point.level, t)

    # ==================== INVERSE ====================

    def _newton(self, residual: Callable[[complex], complex], seed: complex, tol: float,
                accept: float, what: str) -> Tuple[complex, float]:
        """Damped Newton on a holomorphic residual of lambda.

        Evaluation failures count as leaving the shift locus; they shrink the
        step and, if nothing else goes wrong, surface as LeftShiftLocus.
        """
        try:
            lam, err = seed, residual(seed)
        except AtlasError as e:
            raise LeftShiftLocus(f"{what}: seed {seed!r} is outside S0_lambda") from e
        left = False
        for _ in range(NEWTON_STEPS):
            if abs(err) <= tol:
                return lam, abs(err)
            slope = self._slope(residual, lam)
            if slope is None or slope == 0:
                break
            step = err / slope
            t = 1.0
            improved = False
            for _ in range(LINE_SEARCH_STEPS):
                try:
                    trial = lam - t * step
                    trial_err = residual(trial)
                except AtlasError:
                    left = True
                    t *= 0.5
                    continue
                if abs(trial_err) < abs(err):
                    lam, err, improved = trial, trial_err, True
                    break
                t *= 0.5
            if not improved:
                break
        if abs(err) <= accept:
            return lam, abs(err)
        if left:
            raise LeftShiftLocus(f"{what}: Newton keeps leaving the shift locus")
        raise NoConvergence(f"{what}: residual {abs(err):.3e}")

    @staticmethod
    def _slope(residual: Callable[[complex], complex], lam: complex) -> Optional[complex]:
        for h in (FD_STEP * max(1.0, abs(lam)), 0.1 * FD_STEP * max(1.0, abs(lam))):
            try:
                return (residual(lam + h) - residual(lam - h)) / (2.0 * h)
            except AtlasError:
                continue
        return None

    def _solve(self, target: complex, seed: complex, tol: float = 1e-9,
               accept: Optional[float] = None) -> EPoint:
        """Newton on E(lambda) = target."""
        scale = max(1.0, abs(target))
        accept = tol if accept is None else max(tol, accept)
        lam, _ = self._newton(lambda v: (self.evaluate(v).value - target) / scale, seed, tol,
                              accept, f"E-inverse for {target!r}")
        return self.evaluate(lam)

    def E_inverse(self, target: complex, seed_lambda: complex, tol: float = 1e-9) -> complex:
        point = self._solve(target, seed_lambda, tol)
        if not self.classifier.is_shift(self.model.rho, point.lam):
            raise LeftShiftLocus(f"solution {point.lam!r} does not classify as Shift")
        return point.lam

    def seed_points(self) -> List[EPoint]:
        """E evaluated on the Shift pixels of a coarse raster, computed once."""
        if self._seed_points is None:
            renderer = ParameterPlaneRenderer(self.config)
            job = RasterJob(rho=self.model.rho, window=SEED_WINDOW, resolution=SEED_RESOLUTION,
                            budget=IterationBudget(max_iter=500))
            points = []
            for lam in renderer.shift_samples(job):
                try:
                    points.append(self.evaluate(lam))
                except AtlasError:
                    continue
            if self.verbose:
                self.logger.debug(f"Seed raster: {len(points)} samples in S0_lambda")
            self._seed_points = points
        return self._seed_points

    def seed_for(self, target: complex, tol: float = 1e-9) -> EPoint:
        """Solve E(lambda) = target starting from the nearest raster samples."""
        candidates = sorted(self.seed_points(), key=lambda p: abs(p.value - target))
        last_error: Optional[AtlasError] = None
        for candidate in candidates[:SEED_TRIES]:
            try:
                return self._solve(target, candidate.lam, tol)
            except AtlasError as e:
                last_error = e
        raise NoConvergence(f"no raster seed converges to {target!r}") from last_error

    # ==================== CHART MATCHING ====================

    def chart_targets(self, tree: TreePath, start: int = 0) -> List[ChartTarget]:
        """The chart data each tree sample asks of its lambda.

        E(lambda) = tau implies rotation * phi_lambda(lambda) = phi0(tau); along a
        continuous path the chart equation singles out E^{-1}(tau) without
        reading any branch labels.
        """
        m = self.model
        switch = math.log(LOG_CHART_SWITCH * m.r0)
        targets = []
        for i, (_, x) in enumerate(tree.samples[start:], start):
            offset = tree.chart_offsets.get(i)
            if offset is not None and offset.real < switch:
                targets.append(ChartTarget(offset, log_form=True, steps=tree.landing_steps))
            else:
                targets.append(ChartTarget(m.lin.koenigs(x)))
        return targets

    def chart_residual(self, target: ChartTarget, lam: complex) -> complex:
        """Relative mismatch of lambda against a chart target; zero on E^{-1}(tau)."""
        s, lin = self._shift_slice(lam)
        try:
            if not target.log_form:
                value = self.rotation * lin.koenigs(s.lam)
                return (value - target.value) / max(1.0, abs(target.value))
            z = iterate(s, s.lam, target.steps)
            if is_infinity(z) or z.real >= 0.0:
                raise NotInShiftLocus(f"orbit of lambda = {lam!r} is not in the mu tract")
            log_value = self._log_chart_offset(s, lin, z)
        except (NotInBasin, InfinityFlag) as e:
            raise NotInShiftLocus(f"lambda = {lam!r} is not attracted to the origin") from e
        diff = log_value - target.value
        # log targets agree modulo 2 pi i; keep the representative nearest zero
        return complex(diff.real, math.remainder(diff.imag, 2.0 * math.pi))

    def _log_chart_offset(self, s: FamilySlice, lin: Linearizer, z: complex) -> complex:
        """log(rotation * (phi_lambda(f(z)) - r0)) for z deep in the mu tract.

        Close to mu the difference phi_lambda(mu + delta) - r0 loses most of its digits
        to cancellation, so it is replaced by the second-order expansion in delta.
        """
        delta = offset_from_asymptotic_value(s, z)
        if abs(delta) > LINEAR_OFFSET * max(1.0, abs(s.mu)):
            return cmath.log(self.rotation * (lin.koenigs(s.mu + delta) - self.model.r0))
        _, slope = lin.koenigs_with_derivative(s.mu)
        h = CURVATURE_STEP * max(1.0, abs(s.mu))
        _, ahead = lin.koenigs_with_derivative(s.mu + h)
        _, behind = lin.koenigs_with_derivative(s.mu - h)
        curvature = (ahead - behind) / (4.0 * h * slope)
        return (log_offset_from_asymptotic_value(s, z) + cmath.log(self.rotation * slope)
                + curvature * delta)

    def interpolate(self, a: ChartTarget, b: ChartTarget, u: float) -> ChartTarget:
        """Chart target a fraction u of the way from a to b, in b's form."""
        if not b.log_form:
            return ChartTarget(a.value + u * (b.value - a.value))
        if a.log_form:
            start = a.value
        else:
            # phi0(tau) pushed forward to the chart the log target lives on
            zeta = a.value * self.model.rho ** (b.steps + 1)
            start = cmath.log(zeta - self.model.boundary_value)
        gap = b.value - start
        gap = complex(gap.real, math.remainder(gap.imag, 2.0 * math.pi))
        return ChartTarget(start + u * gap, log_form=True, steps=b.steps)

    def solve_chart(self, target: ChartTarget, seed: complex, tol: float = 1e-10,
                    accept: float = TRACE_ACCEPT) -> complex:
        lam, _ = self._newton(lambda v: self.chart_residual(target, v), seed, tol,
                              max(tol, accept), "chart continuation")
        return lam

    # ==================== ACCESSIBILITY PATHS ====================

    def trace_accessibility_path(self, target: Itinerary, samples_per_branch: int = 64,
                                 depth: Optional[int] = None,
                                 progress: Optional[Callable[[int, int], None]] = None) -> TracedPath:
        """Carry the model tree path to `target` into the lambda plane.

        The first sample is solved on E itself from the seed raster. Every later
        sample matches the chart data of its model point, predicted by linear
        extrapolation from the previous two; failures halve the step along the
        segment between model samples until it is shorter than 1e-6 of the path
        parameter.

        Without an explicit depth an infinite word is followed period by period
        until two successive extrapolated landing points agree to within
        LANDING_TOLERANCE, or the configured maximum depth is reached.
        """
        if samples_per_branch < MIN_SAMPLES_PER_BRANCH:
            raise ConfigError(f"need at least {MIN_SAMPLES_PER_BRANCH} samples per branch")
        kind = (TargetKind.VIRTUAL_CENTER if target.is_finite else
                TargetKind.PARABOLIC if target.is_periodic else TargetKind.MISIUREWICZ_LIKE)
        adaptive = depth is None and not target.is_finite
        if adaptive:
            depth = len(target.preperiod) + MIN_LANDING_NODES * len(target.period)
        tree = tree_path(self.model, target, samples_per_branch, depth,
                         tract_depth=self.config.tract_depth)
        charts = self.chart_targets(tree)
        traced = TracedPath(target=target, target_kind=kind,
                            final_branch_start=tree.final_branch_start)
        traced.tolerances["trace_accept"] = TRACE_ACCEPT
        if adaptive:
            traced.tolerances["landing"] = LANDING_TOLERANCE

        first = self.seed_for(tree.samples[0][1])
        self._record(traced, first, 0.0)
        state = _Continuation(current=first.lam)
        landing: Optional[complex] = None
        while True:
            self._follow(traced, tree, charts, state, progress)
            traced.depth = len(tree.node_indices) - 1
            if not adaptive:
                traced.terminal_estimate = state.current
                break
            estimate = landing_estimate(self._period_nodes(traced, tree), kind == TargetKind.PARABOLIC)
            if landing is not None and abs(estimate - landing) <= LANDING_TOLERANCE:
                traced.terminal_estimate = estimate
                break
            landing = estimate
            step = DEPTH_STEP * len(target.period)
            if depth + step > self.config.max_trace_depth:
                self.logger.warning(f"Landing point of {target} still moving at depth {depth}")
                traced.terminal_estimate = estimate
                break
            depth += step
            tree = tree_path(self.model, target, samples_per_branch, depth,
                             tract_depth=self.config.tract_depth)
            # the old final node is the first sample of the new branch
            charts.extend(self.chart_targets(tree, start=len(charts)))
            traced.final_branch_start = tree.final_branch_start
            if self.verbose:
                self.logger.debug(f"Extending {target} to depth {depth}, landing estimate {estimate!r}")

        self._stamp_times(traced, len(tree.samples))
        self._cross_check(traced)
        return traced

    def _follow(self, traced: TracedPath, tree: TreePath, charts: List[ChartTarget],
                state: "_Continuation", progress: Optional[Callable[[int, int], None]]) -> None:
        """Continue through the tree samples that have no traced lambda yet."""
        total = len(tree.samples)
        dt = 1.0 / total
        for i in range(len(traced.lambda_samples), total):
            try:
                residual = self._advance(charts[i - 1], charts[i], state, dt)
                point = self.evaluate(state.current)
            except AtlasError as e:
                self.logger.warning(f"Trace of {traced.target} stalled at sample {i}/{total}")
                self._stamp_times(traced, total)
                raise ContinuationStalled(str(e), partial=traced) from e
            self._record(traced, point, residual)
            if progress is not None:
                progress(i, total)

    @staticmethod
    def _period_nodes(traced: TracedPath, tree: TreePath) -> List[complex]:
        """Traced lambdas at the nodes that close each period after the preperiod."""
        a, p = len(traced.target.preperiod), len(traced.target.period)
        return [traced.lambda_samples[i] for i in tree.node_indices[a::p]
                if i < len(traced.lambda_samples)]

    def _advance(self, chart_from: ChartTarget, chart_to: ChartTarget, state: "_Continuation",
                 dt: float) -> float:
        """Continue from one model sample to the next with step halving on failure.

        The line through the last two solutions predicts the next one. Returns
        the chart residual at the new sample.
        """
        u, h = 0.0, 1.0
        residual = 0.0
        while u < 1.0:
            frac = min(h, 1.0 - u)
            target = self.interpolate(chart_from, chart_to, u + frac)
            predicted = state.predict(frac)
            try:
                solved = self.solve_chart(target, predicted)
                residual = abs(self.chart_residual(target, solved))
                if not self.classifier.is_shift(self.model.rho, solved):
                    raise LeftShiftLocus(f"{solved!r} does not classify as Shift")
            except AtlasError as e:
                h *= 0.5
                if h * dt < STALL_FRACTION:
                    raise ContinuationStalled(f"step halving stalled at u={u:.3g}: {e}") from e
                continue
            state.accept(solved, frac)
            u += frac
            h = min(1.0, 2.0 * h)
        return residual

    @staticmethod
    def _record(traced: TracedPath, point: EPoint, residual: float) -> None:
        traced.lambda_samples.append(point.lam)
        traced.levels.append(point.level)
        traced.words.append(point.word)
        traced.residuals.append(residual)

    @staticmethod
    def _stamp_times(traced: TracedPath, total: int) -> None:
        """Path parameter of each traced sample, i / total as on the model tree."""
        traced.t_samples = [i / total for i in range(len(traced.lambda_samples))]

    def _cross_check(self, traced: TracedPath) -> None:
        """Polish the terminal estimate with the solver of the target's kind.

        A virtual center is solved for the pole labels its orbit shows at the
        terminal estimate, which need not be the model word.
        """
        target = traced.target
        try:
            labels = None
            if target.is_finite:
                s = make_slice(self.model.rho, traced.terminal_estimate)
                labels = dynamic_word(s, len(target.preperiod))
            result = solve_for_target(self.model.rho, target, traced.terminal_estimate, labels)
        except AtlasError as e:
            traced.solver_error = str(e)
            self.logger.warning(f"Solver cross-check for {target} failed: {e}")
            return
        traced.solver_estimate = result.lam
        traced.tolerances["solver"] = result.tol
        traced.solver_distance = abs(result.lam - traced.terminal_estimate)
        if self.verbose:
            self.logger.debug(f"Terminal {traced.terminal_estimate!r} vs solver {result.lam!r}: "
                              f"{traced.solver_distance:.3e}")


def E_map(m: ModelMap, lam: complex, config: Optional[AtlasConfig] = None) -> complex:
    return ParameterAtlas(m, config).E_map(lam)


def E_inverse(m: ModelMap, target: complex, seed_lambda: complex,
              config: Optional[AtlasConfig] = None) -> complex:
    return ParameterAtlas(m, config).E_inverse(target, seed_lambda)
