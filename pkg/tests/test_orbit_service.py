import pytest

from config.settings import IterationBudget
from models.dynamics import OrbitKind, Region, ShiftSide
from models.errors import ConfigError, NoConvergence
from models.itinerary import Itinerary
from services.family_service import make_slice, pole
from services.orbit_service import OrbitClassifier, minimal_period, refine_cycle
from services.solver_service import parabolic_solve, virtual_center_solve

RHO = 2.0 / 3.0


@pytest.fixture(scope="module")
def classifier(config):
    return OrbitClassifier(config)


def test_origin_is_trapped_immediately(classifier, shift_slice):
    verdict = classifier.classify_orbit(shift_slice, 0j)
    assert verdict.kind == OrbitKind.ATTRACTED_TO_ORIGIN
    assert verdict.iterations_used == 0
    assert verdict.multiplier == pytest.approx(RHO)


def test_both_asymptotic_values_fall_into_the_origin(classifier, shift_slice):
    for z0 in (shift_slice.lam, shift_slice.mu):
        assert classifier.classify_orbit(shift_slice, z0).kind == OrbitKind.ATTRACTED_TO_ORIGIN


@pytest.mark.parametrize("lam, side", [(-0.1, ShiftSide.S0_LAMBDA), (0.1, ShiftSide.S0_MU)])
def test_small_parameters_are_shift(classifier, lam, side):
    result = classifier.classify_parameter(RHO, lam, resolve_side=True)
    assert result.region == Region.SHIFT
    assert result.shift_side == side
    assert classifier.is_shift(RHO, lam)


def test_model_parameter_captures_a_fixed_point(classifier, model):
    result = classifier.classify_parameter(RHO, model.lambda0)
    assert result.region == Region.M_LAMBDA
    assert result.period_lambda == 1
    assert not classifier.is_shift(RHO, model.lambda0)


def test_model_fixed_point_multiplier(model):
    point, mult = refine_cycle(model.slice, model.q0 + 1e-3, 1)
    assert point == pytest.approx(model.q0, abs=1e-10)
    assert mult == pytest.approx(RHO, abs=1e-9)
    assert minimal_period(model.slice, point, 3) == 1


def test_refine_cycle_rejects_bad_period(shift_slice):
    with pytest.raises(ValueError):
        refine_cycle(shift_slice, 0.1, 0)


def test_budget_is_honored(classifier):
    s = make_slice(RHO, 0.3 + 4.0j)
    verdict = classifier.classify_orbit(s, s.lam, max_iter=1)
    assert verdict.iterations_used <= 1


def test_degenerate_parameter_is_not_shift(classifier):
    assert not classifier.is_shift(RHO, 0.0)


def test_iteration_budget_validation():
    with pytest.raises(ConfigError):
        IterationBudget(max_iter=0)
    with pytest.raises(ConfigError):
        IterationBudget(tol=0.0)


def test_cycle_refinement_reports_failure_near_a_pole(model):
    with pytest.raises(NoConvergence):
        refine_cycle(model.slice, pole(model.slice, 0), 1)


@pytest.mark.parametrize("max_iter", [0, -3])
def test_empty_budget_is_rejected(classifier, shift_slice, max_iter):
    with pytest.raises(ValueError):
        classifier.classify_orbit(shift_slice, shift_slice.lam, max_iter=max_iter)


def test_region_flips_across_the_parabolic_parameter(classifier):
    lam_p = parabolic_solve(RHO, 1, 1.87, 1.12).lam
    budget = IterationBudget(max_iter=20000)
    below = classifier.classify_parameter(RHO, lam_p - 1e-4, budget)
    above = classifier.classify_parameter(RHO, lam_p + 1e-4, budget)
    assert below.region == Region.SHIFT
    assert above.region == Region.M_LAMBDA
    assert above.period_lambda == 1


def test_region_flips_across_a_virtual_center(classifier):
    center = virtual_center_solve(RHO, Itinerary.finite(-1), 0.97 - 2.2j).lam
    # f(center + t * direction) runs off toward +infinity for t > 0 and toward -infinity for t < 0
    ratio = -3.0 * center ** 2 / (2.5 - 3.0 * center)
    direction = ratio / abs(ratio)
    outside = classifier.classify_parameter(RHO, center + 1e-4 * direction)
    assert outside.region == Region.M_LAMBDA
    assert outside.period_lambda == 2
    assert classifier.classify_parameter(RHO, center - 1e-4 * direction).region == Region.SHIFT
