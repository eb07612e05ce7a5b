"""Service for the model map Q = f_{lambda_0}: symbolics, charts and tree paths.

Q has an attracting fixed point q0 != 0 with multiplier rho0. Its immediate
basin K0 carries the Koenigs chart phi0 (phi0'(q0) = 1, r0 = |phi0(lambda_0)|),
and every point of K0 is R_{j_1} o ... o R_{j_n} applied to a point of the
injectivity domain Delta = phi0^{-1}(|zeta| < r0).
"""

import cmath
import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from config.settings import AtlasConfig
from models.dynamics import FatouCoordinate, Normalization, OrbitKind, TreePath
from models.errors import (ConfigError, InadmissibleWord, NoConvergence, NoSolutionInWindow,
                           NotInBasin, NotInK0, OutsideInjectivityDisk, Unresolvable)
from models.family import FamilySlice, is_infinity
from models.itinerary import Itinerary
from services.family_service import (branch_index, compose_branches, derivative, evaluate,
                                     inverse_branch, inverse_branch_near, iterate_with_derivative,
                                     make_slice, pole)
from services.linearizer_service import Linearizer, build_linearizer
from services.orbit_service import OrbitClassifier, refine_cycle

logger = logging.getLogger(__name__)

SCAN_WINDOW = (0.0, 5.0)
SCAN_POINTS = 200
PERIODIC_STEP_TOLERANCE = 1e-13
PERIODIC_MAX_STEPS = 500
BOUNDARY_SHRINK = 1e-6
ROOT_ANGLE = math.pi
ARC_END_ANGLE = 0.02
MAX_CHART_DEPTH = 200
# below this offset from lambda_0 the tract is followed in log coordinates
DEEP_OFFSET = 1e-8


@dataclass(frozen=True)
class ModelMap:
    slice: FamilySlice
    q0: complex
    lin: Linearizer
    r0: float
    # phi0(lambda_0), |.| = r0, and phi0'(lambda_0)
    boundary_value: complex
    boundary_slope: complex

    @property
    def rho(self) -> complex:
        return self.slice.rho

    @property
    def lambda0(self) -> complex:
        return self.slice.lam

    @property
    def mu0(self) -> complex:
        return self.slice.mu

    def Q(self, z: complex) -> complex:
        return evaluate(self.slice, z)


# ==================== MODEL SETUP ====================

def tanh_conjugacy_seed(rho0: complex) -> Tuple[complex, complex]:
    """(lambda_0, q0) from the conjugacy Q(z) = c + alpha*tanh(z - c).

    Fixed points 0 and 2c share the multiplier alpha*sech^2(c), which equals
    2c/sinh(2c); alpha = c*coth(c) keeps 0 fixed, and lambda_0 = c + alpha.
    """
    s_real = _solve_sinc_real(min(max(abs(rho0), 1e-6), 1.0 - 1e-9))
    s = complex(s_real)
    for _ in range(60):
        g = s / cmath.sinh(s) - rho0
        dg = (cmath.sinh(s) - s * cmath.cosh(s)) / cmath.sinh(s) ** 2
        step = g / dg
        s -= step
        if abs(step) < 1e-15:
            break
    c = s / 2.0
    alpha = c * cmath.cosh(c) / cmath.sinh(c)
    return c + alpha, 2.0 * c


def _solve_sinc_real(rho: float) -> float:
    """Positive root of x/sinh(x) = rho."""
    return brentq(lambda x: x / math.sinh(x) - rho, 1e-8, 60.0, xtol=1e-15)


def _polish_model(rho0: complex, lam: complex, q: complex) -> Tuple[complex, complex]:
    """Newton in (lambda, q) on f_lambda(q) = q, f_lambda'(q) = rho0."""
    def residual(lam_: complex, q_: complex) -> np.ndarray:
        s = make_slice(rho0, lam_)
        return np.array([evaluate(s, q_) - q_, derivative(s, q_) - rho0])

    for _ in range(50):
        r = residual(lam, q)
        if np.max(np.abs(r)) <= 1e-15:
            break
        h = 1e-7 * max(1.0, abs(lam))
        k = 1e-7 * max(1.0, abs(q))
        jac = np.column_stack([
            (residual(lam + h, q) - residual(lam - h, q)) / (2 * h),
            (residual(lam, q + k) - residual(lam, q - k)) / (2 * k),
        ])
        try:
            step = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as e:
            raise NoSolutionInWindow("singular Jacobian while polishing lambda_0") from e
        lam, q = lam - step[0], q - step[1]
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, abs(lam)):
            break
    return complex(lam), complex(q)


def real_multiplier_scan(rho0: float, window: Tuple[float, float] = SCAN_WINDOW,
                         points: int = SCAN_POINTS) -> List[float]:
    """Real lambdas in the window with an attracting fixed point q != 0 of multiplier rho0.

    Each grid lambda is iterated onto its nonzero fixed point; every sign change
    of f'(q(lambda)) - rho0 between neighbouring samples is refined by bisection.
    """
    grid = np.linspace(window[0], window[1], points + 2)[1:-1]
    step = grid[1] - grid[0]
    samples: List[Tuple[float, float, complex]] = []
    for lam in grid:
        value = _fixed_point_multiplier(rho0, float(lam))
        if value is not None:
            samples.append((float(lam), value[0], value[1]))

    roots: List[float] = []
    for (a, ma, qa), (b, mb, qb) in zip(samples, samples[1:]):
        if (ma - rho0) * (mb - rho0) > 0 or b - a > 1.5 * step or abs(qa - qb) > 0.5:
            continue
        seed = {"q": qa}

        def g(lam: float) -> float:
            q, mult = refine_cycle(make_slice(rho0, lam), seed["q"], 1)
            seed["q"] = q
            return mult.real - rho0

        try:
            root = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        except (NoConvergence, ValueError):
            continue
        if abs(g(root)) < 1e-9:
            roots.append(root)
    if not roots:
        raise NoSolutionInWindow(f"no real lambda in {window} has fixed-point multiplier {rho0}")
    return roots


def _fixed_point_multiplier(rho0: float, lam: float) -> Optional[Tuple[float, complex]]:
    if abs(lam - rho0 / 2) < 1e-9:
        return None
    s = make_slice(rho0, lam)
    z = complex(lam)
    for _ in range(3000):
        w = evaluate(s, z)
        if is_infinity(w):
            return None
        if abs(w - z) < 1e-12:
            break
        z = w
    else:
        return None
    if abs(z) < 1e-6:
        return None
    mult = derivative(s, z)
    return mult.real, z


def model_setup(rho0: complex, config: Optional[AtlasConfig] = None) -> ModelMap:
    """Locate lambda_0 in Omega_1 with f'(q0) = rho0 and build the model chart."""
    config = config or AtlasConfig()
    rho0 = complex(rho0)
    if not 0.0 < abs(rho0) < 1.0:
        raise NoSolutionInWindow(f"|rho0| must lie in (0, 1), got {abs(rho0)!r}")
    seed_lam, seed_q = tanh_conjugacy_seed(rho0)
    lam, q = seed_lam, seed_q
    if rho0.imag == 0.0 and rho0.real > 0.0:
        try:
            roots = real_multiplier_scan(rho0.real)
        except NoSolutionInWindow:
            logger.warning(f"Real scan found no root for rho0={rho0.real!r}, using the tanh seed")
        else:
            lam = complex(min(roots, key=lambda x: abs(x - seed_lam)))
            q, _ = refine_cycle(make_slice(rho0, lam), seed_q, 1)
    lam, q = _polish_model(rho0, lam, q)
    s = make_slice(rho0, lam)
    q, mult = refine_cycle(s, q, 1)

    classifier = OrbitClassifier(config)
    v_lam = classifier.classify_orbit(s, s.lam, max_iter=max(config.max_iter, 4000))
    if v_lam.kind != OrbitKind.ATTRACTED_TO_CYCLE or v_lam.period != 1:
        raise NoSolutionInWindow(f"lambda_0 = {lam!r} is not attracted to a fixed point")
    v_mu = classifier.classify_orbit(s, s.mu, max_iter=max(config.max_iter, 4000),
                                     pole_successor=s.mu)
    if v_mu.kind != OrbitKind.ATTRACTED_TO_ORIGIN:
        raise NoSolutionInWindow(f"mu_0 = {s.mu!r} is not attracted to the origin")

    lin = build_linearizer(s, q, Normalization.DERIVATIVE_ONE, distinguished=s.lam, config=config)
    value, slope = lin.koenigs_with_derivative(s.lam)
    logger.debug(f"Model map: lambda_0={lam!r}, q0={q!r}, multiplier={mult!r}, r0={lin.r0!r}")
    return ModelMap(slice=s, q0=lin.fixed_point, lin=lin, r0=lin.r0,
                    boundary_value=value, boundary_slope=slope)


# ==================== POINT RESOLVERS ====================

def prepole_point(m: ModelMap, word: Itinerary) -> complex:
    """p_{j_1...j_n} = R_{j_1...j_{n-1}}(p_{j_n})."""
    if not word.is_finite:
        raise InadmissibleWord(f"prepoles need a finite word, got {word}")
    symbols = word.preperiod
    return compose_branches(m.slice, symbols[:-1], pole(m.slice, symbols[-1]))


def periodic_point(m: ModelMap, word: Itinerary) -> complex:
    """Fixed point of the contraction R_{j_1...j_n} for the word (j_1...j_n)-bar."""
    if not word.period:
        raise InadmissibleWord(f"periodic points need a period, got {word}")
    symbols = word.period
    z = pole(m.slice, symbols[0])
    for _ in range(PERIODIC_MAX_STEPS):
        nxt = compose_branches(m.slice, symbols, z)
        if abs(nxt - z) < PERIODIC_STEP_TOLERANCE * max(1.0, abs(z)):
            z = nxt
            break
        z = nxt
    else:
        raise NoConvergence(f"inverse-branch iteration for {word} did not settle")
    w, d = iterate_with_derivative(m.slice, z, len(symbols))
    if abs(w - z) > 1e-9 * max(1.0, abs(z)) or abs(d) <= 1.0:
        raise NoConvergence(f"resolved point for {word} is not a repelling cycle")
    return z


def preperiodic_point(m: ModelMap, word: Itinerary) -> complex:
    """R_{preperiod} applied to the periodic point of the period word."""
    if not (word.preperiod and word.period):
        raise InadmissibleWord(f"preperiodic points need preperiod and period, got {word}")
    landing = periodic_point(m, Itinerary.periodic(*word.period))
    return compose_branches(m.slice, word.preperiod, landing)


def resolve_point(m: ModelMap, word: Itinerary) -> complex:
    if word.is_finite:
        return prepole_point(m, word)
    if word.is_periodic:
        return periodic_point(m, word)
    if word.is_preperiodic:
        return preperiodic_point(m, word)
    raise InadmissibleWord("the infinity symbol has no finite point")


def fixed_point_preimage(m: ModelMap, word: Itinerary) -> complex:
    """q_{j_1...j_n} = R_{j_1...j_n}(q0)."""
    if not word.is_finite:
        raise InadmissibleWord(f"fixed-point preimages need a finite word, got {word}")
    return compose_branches(m.slice, word.preperiod, m.q0)


def enumerate_prepoles(m: ModelMap, order: int,
                       window: Optional[int] = None) -> Dict[Tuple[int, ...], complex]:
    """Prepoles of the given order over symbols |j| <= window (ATLAS_SYMBOL_WINDOW by default)."""
    symbols = _symbol_range(window)
    return {w: prepole_point(m, Itinerary.finite(*w)) for w in product(symbols, repeat=order)}


def enumerate_periodic_points(m: ModelMap, period: int,
                              window: Optional[int] = None) -> Dict[Tuple[int, ...], complex]:
    symbols = _symbol_range(window)
    return {w: periodic_point(m, Itinerary.periodic(*w)) for w in product(symbols, repeat=period)}


def _symbol_range(window: Optional[int]) -> range:
    window = AtlasConfig().symbol_window if window is None else window
    if window < 0:
        raise InadmissibleWord(f"symbol window must be >= 0, got {window}")
    return range(-window, window + 1)


# ==================== CHARTS ====================

def in_k0(m: ModelMap, z: complex) -> bool:
    try:
        m.lin.koenigs(z)
        return True
    except NotInBasin:
        return False


def coordinate_chart(m: ModelMap, z: complex) -> FatouCoordinate:
    """(X_{j_n}, r, theta): forward iterate into Delta, recording branch indices."""
    if abs(z - m.lambda0) <= 1e-14 * max(1.0, abs(z)):
        raise NotInK0("lambda_0 is the puncture of the chart")
    try:
        zeta = m.lin.koenigs(z)
    except NotInBasin as e:
        raise NotInK0(f"{z!r} is not attracted to q0") from e
    word: List[int] = []
    w = complex(z)
    while not m.lin.in_injectivity_domain(w):
        if len(word) >= MAX_CHART_DEPTH:
            raise NotInK0(f"{z!r} does not reach Delta within {MAX_CHART_DEPTH} steps")
        try:
            word.append(branch_index(m.slice, w))
        except Unresolvable as e:
            raise NotInK0(f"no inverse branch reproduces {w!r}") from e
        w = m.Q(w)
    landed = m.lin.koenigs(w)
    t = cmath.phase(landed)
    if t >= math.pi:
        t = -math.pi
    r = abs(landed) / abs(m.rho) ** len(word) if word else abs(zeta)
    return FatouCoordinate.from_angle(tuple(word), r, t)


def point_from_coordinate(m: ModelMap, c: FatouCoordinate) -> complex:
    """Inverse of coordinate_chart: phi0^{-1} on the landed disk, then the branches."""
    c.validate()
    n = c.n
    radius = c.r * abs(m.rho) ** n
    if radius >= m.r0:
        raise InadmissibleWord(f"level {c.r!r} is too high for a word of length {n}")
    if c.word and c.word[-1] == 0 and radius < abs(m.rho) * m.r0:
        raise InadmissibleWord("an A-domain word needs its landed level in [|rho| r0, r0)")
    try:
        landed = m.lin.koenigs_inverse(cmath.rect(radius, c.t))
    except OutsideInjectivityDisk as e:
        raise InadmissibleWord(str(e)) from e
    return compose_branches(m.slice, c.word, landed)


# ==================== TREE PATHS ====================

def boundary_point(m: ModelMap, angle: float, shrink: float = BOUNDARY_SHRINK) -> complex:
    """phi0^{-1} just inside the circle |zeta| = r0, `angle` measured from the puncture."""
    zeta = m.boundary_value * (1.0 - shrink) * cmath.exp(1j * angle)
    return m.lin.koenigs_inverse(zeta)


def tree_root(m: ModelMap) -> complex:
    """x*_0: the point of gamma_0 = R_0(boundary of Delta) opposite the puncture lambda_0."""
    return inverse_branch(m.slice, 0, boundary_point(m, ROOT_ANGLE))


def _spiral_point(m: ModelMap, sign: float, s: float) -> Tuple[complex, complex]:
    """R_0 of the point whose chart value spirals from the arc end into phi0(lambda_0),
    with log(zeta - phi0(lambda_0)).

    zeta(s) = phi0(lambda_0) (1 - eta e^{-2s}) e^{i theta e^{-2s}}: the level rises
    monotonically toward r0 while R_0 of the point runs out along the tract.
    """
    eta = BOUNDARY_SHRINK
    theta = sign * ARC_END_ANGLE
    decay = math.exp(-2.0 * s) if s < 700.0 else 0.0
    if decay * ARC_END_ANGLE > DEEP_OFFSET:
        a = theta * decay
        # zeta - phi0(lambda_0) without cancelling the leading digits
        offset = m.boundary_value * (complex(-2.0 * math.sin(0.5 * a) ** 2, math.sin(a))
                                     * (1.0 - eta * decay) - eta * decay)
        zeta = m.boundary_value + offset
        point = inverse_branch(m.slice, 0, m.lin.koenigs_inverse(zeta))
        return point, cmath.log(offset)
    log_offset = cmath.log(m.boundary_value * complex(-eta, theta)) - 2.0 * s
    point = inverse_branch_near(m.slice, 0, m.lambda0, log_offset - cmath.log(m.boundary_slope))
    return point, log_offset


def _level_ray(m: ModelMap, target_pole: int, samples: int,
               tract_depth: float) -> List[Tuple[complex, Optional[complex]]]:
    """gamma_0 from the root toward the puncture, on the side that R_j sends into p_j,
    then out along the tract to depth `tract_depth`.

    Tract samples carry their chart offset; arc samples carry None.
    """
    best = None
    for sign in (1.0, -1.0):
        deep, _ = _spiral_point(m, sign, tract_depth)
        gap = abs(inverse_branch(m.slice, target_pole, deep) - pole(m.slice, target_pole))
        if best is None or gap < best[0]:
            best = (gap, sign)
    sign = best[1]
    arc_samples = max(2, samples // 2)
    ray: List[Tuple[complex, Optional[complex]]] = [
        (inverse_branch(m.slice, 0, boundary_point(m, float(t))), None)
        for t in np.linspace(sign * ROOT_ANGLE, sign * ARC_END_ANGLE, arc_samples, endpoint=False)]
    tail = samples - arc_samples
    for k in range(tail + 1):
        s = (1.0 + tract_depth) ** (k / tail) - 1.0
        ray.append(_spiral_point(m, sign, s))
    return ray


def tree_path(m: ModelMap, target: Itinerary, samples_per_branch: int = 64,
              depth: Optional[int] = None, tract_depth: float = 2e4) -> TreePath:
    """Path in the tree from the root x*_0 to the point named by `target`.

    Branch k runs from node R_{j_1..j_{k-1}}(x*_0) to R_{j_1..j_k}(x*_0) as the image
    of the chord s_{j_k} = [x*_0, R_{j_k}(x*_0)]. A finite word ends with the image
    of the level curve gamma_0 running into the pole p_{j_n}; an infinite word is
    followed to `depth` branches.

    Branches are straight chords, which stay inside the basin only while the
    model multiplier is real.
    """
    if target.is_infinity_terminal:
        raise InadmissibleWord("the infinity symbol is not a tree target")
    if samples_per_branch < 2:
        raise InadmissibleWord("need at least two samples per branch")
    if m.rho.imag != 0:
        raise ConfigError(f"tree paths need a real model multiplier, got rho = {m.rho!r}")
    root = tree_root(m)
    if target.is_finite:
        symbols = list(target.preperiod)
    else:
        if depth is None:
            depth = len(target.preperiod) + len(target.period) + 6
        symbols = target.symbols(depth)

    path = TreePath(target=target)
    points: List[complex] = []
    prefix: List[int] = []
    for j in symbols:
        node_to = inverse_branch(m.slice, j, root)
        path.node_indices.append(len(points))
        for s in np.linspace(0.0, 1.0, samples_per_branch, endpoint=False):
            chord = root + float(s) * (node_to - root)
            points.append(compose_branches(m.slice, prefix, chord))
        prefix.append(j)

    if target.is_finite:
        # R_{j_1..j_{n-1}} o R_{j_n} of the gamma_0 ray, which ends at the prepole
        last, head = prefix[-1], prefix[:-1]
        path.final_branch_start = len(points)
        path.node_indices.append(len(points))
        path.landing_steps = len(prefix)
        for w, offset in _level_ray(m, last, 2 * samples_per_branch, tract_depth):
            if offset is not None:
                path.chart_offsets[len(points)] = offset
            points.append(compose_branches(m.slice, head, inverse_branch(m.slice, last, w)))
    else:
        path.final_branch_start = len(points) - samples_per_branch
        path.node_indices.append(len(points))
        points.append(compose_branches(m.slice, prefix, root))

    total = len(points)
    path.samples = [(i / total, z) for i, z in enumerate(points)]
    return path


def path_tail_diameters(path: TreePath) -> List[float]:
    """Euclidean diameter of the samples beyond each node, in node order."""
    pts = np.array([z for _, z in path.samples])
    out = []
    for start in path.node_indices:
        tail = pts[start:]
        out.append(float(np.max(np.abs(tail[:, None] - tail[None, :]))) if len(tail) < 2000
                   else 2.0 * float(np.max(np.abs(tail - tail[-1]))))
    return out
