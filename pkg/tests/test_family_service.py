import cmath
import math

import numpy as np
import pytest

from models.errors import AsymptoticValueHit, BadMultiplier, DegenerateParameter, InfinityFlag
from models.family import INFINITY, is_infinity
from services.family_service import (branch_index, central_difference, compose_branches,
                                     derivative, derivative_array, evaluate, evaluate_array,
                                     family_config, inverse_branch, inverse_branch_near, iterate,
                                     iterate_with_derivative, log_offset_from_asymptotic_value,
                                     make_slice, offset_from_asymptotic_value, pole,
                                     principal_log)

RHO = 2.0 / 3.0


def test_make_slice_solves_mu():
    s = make_slice(RHO, 0.1)
    assert s.mu == pytest.approx(1.0 / 7.0)
    assert s.constraint_residual() < 1e-14


@pytest.mark.parametrize("rho, lam, error", [
    (1.5, 0.1, BadMultiplier),
    (0.0, 0.1, BadMultiplier),
    (RHO, 0.0, DegenerateParameter),
    (RHO, RHO / 2, DegenerateParameter),
])
def test_make_slice_rejects(rho, lam, error):
    with pytest.raises(error):
        make_slice(rho, lam)


def test_origin_is_fixed_with_multiplier_rho(shift_slice):
    assert evaluate(shift_slice, 0j) == 0j
    assert derivative(shift_slice, 0j) == pytest.approx(RHO, abs=1e-14)


def test_pi_i_periodicity(shift_slice):
    z = 0.3 + 0.4j
    assert evaluate(shift_slice, z + 1j * math.pi) == pytest.approx(evaluate(shift_slice, z), abs=1e-13)


def test_asymptotic_values_beyond_guard(shift_slice):
    assert evaluate(shift_slice, 60 + 1j) == shift_slice.lam
    assert evaluate(shift_slice, -60 + 1j) == shift_slice.mu


def test_pole_formula():
    s = make_slice(RHO, 1.0)
    assert pole(s, 0) == pytest.approx(math.log(2.0) / 2 + 0.5j * math.pi)
    assert is_infinity(evaluate(s, pole(s, 0)))
    assert is_infinity(evaluate(s, pole(s, -3)))
    with pytest.raises(InfinityFlag):
        derivative(s, pole(s, 1))


def test_inverse_branches(shift_slice):
    z = 0.3 + 0.2j
    w = evaluate(shift_slice, z)
    for j in (-2, 0, 1, 5):
        assert inverse_branch(shift_slice, j, w) == pytest.approx(z + j * math.pi * 1j, abs=1e-12)
        assert branch_index(shift_slice, z + j * math.pi * 1j) == j
    assert inverse_branch(shift_slice, 2, complex(math.inf, math.inf)) == pole(shift_slice, 2)


def test_inverse_branch_rejects_asymptotic_values(shift_slice):
    with pytest.raises(AsymptoticValueHit):
        inverse_branch(shift_slice, 0, shift_slice.lam)
    with pytest.raises(AsymptoticValueHit):
        inverse_branch(shift_slice, 0, shift_slice.mu)


def test_compose_branches_inverts_iterate(shift_slice):
    z = compose_branches(shift_slice, (1, -1, 0), 0.01 + 0.02j)
    assert iterate(shift_slice, z, 3) == pytest.approx(0.01 + 0.02j, abs=1e-11)


def test_offsets_match_direct_difference(shift_slice):
    s = shift_slice
    for z, value in ((2.0 + 0.3j, s.lam), (-2.0 + 0.3j, s.mu)):
        direct = evaluate(s, z) - value
        assert offset_from_asymptotic_value(s, z) == pytest.approx(direct, rel=1e-10)
        log_offset = log_offset_from_asymptotic_value(s, z)
        assert cmath.exp(log_offset) == pytest.approx(direct, rel=1e-10)


def test_log_offset_survives_underflow(shift_slice):
    s = shift_slice
    z = -400.0 + 0.1j
    log_offset = log_offset_from_asymptotic_value(s, z)
    assert math.isfinite(log_offset.real)
    assert log_offset.real == pytest.approx(-800.0 + math.log(abs(s.lam - s.mu) / abs(s.lam) * abs(s.mu)),
                                            abs=1e-9)


@pytest.mark.parametrize("log_eps", [cmath.log(1e-6 * (1 + 1j)), cmath.log(1e-9 * (1 - 2j))])
def test_inverse_branch_near_matches_exact_branch(shift_slice, log_eps):
    s = shift_slice
    eps = cmath.exp(log_eps)
    for value in (s.lam, s.mu):
        exact = inverse_branch(s, 1, value + eps)
        assert inverse_branch_near(s, 1, value, log_eps) == pytest.approx(exact, abs=1e-6)


def test_inverse_branch_near_needs_an_asymptotic_value(shift_slice):
    with pytest.raises(ValueError):
        inverse_branch_near(shift_slice, 0, 0.5, cmath.log(1e-12))


def test_chain_rule_matches_difference_quotient(shift_slice):
    z = 0.2 - 0.1j
    _, d = iterate_with_derivative(shift_slice, z, 1)
    assert d == pytest.approx(central_difference(shift_slice, z), rel=1e-8)


def test_array_versions_agree():
    rng = np.random.default_rng(7)
    s = make_slice(RHO, -0.3 + 0.2j)
    z = rng.uniform(-3, 3, 200) + 1j * rng.uniform(-3, 3, 200)
    values = evaluate_array(np.full(z.shape, s.lam), np.full(z.shape, s.mu), z)
    slopes = derivative_array(np.full(z.shape, s.lam), np.full(z.shape, s.mu), s.rho, z)
    for k in range(len(z)):
        assert values[k] == pytest.approx(evaluate(s, complex(z[k])), rel=1e-12, abs=1e-14)
        assert slopes[k] == pytest.approx(derivative(s, complex(z[k])), rel=1e-12, abs=1e-14)


def test_real_slices_use_the_principal_log():
    s = make_slice(RHO, 1.0)
    # mu = 1/(1 - 3) comes out with a negative zero imaginary part
    assert (s.lam / s.mu).real == pytest.approx(-2.0)
    assert principal_log(complex(-2.0, -0.0)).imag == pytest.approx(math.pi)
    expected = math.log(2.0) / 2 + 0.5j * math.pi
    assert pole(s, 0) == pytest.approx(expected, abs=1e-14)
    assert inverse_branch(s, 0, INFINITY) == pytest.approx(expected, abs=1e-14)
    assert inverse_branch(s, -1, INFINITY) == pytest.approx(expected - 1j * math.pi, abs=1e-14)
    # w = 2 sits on the cut of (w/mu - 1)/(w/lambda - 1) = -5
    assert inverse_branch(s, 0, 2.0 + 0j).imag == pytest.approx(0.5 * math.pi)


def _random_slices(rng, count):
    slices = []
    while len(slices) < count:
        lam = complex(rng.uniform(0.05, 3.0) * cmath.exp(1j * rng.uniform(-math.pi, math.pi)))
        if abs(lam - RHO / 2) < 0.05:
            continue
        slices.append(make_slice(RHO, lam))
    return slices


def _pole_distance(s, z):
    return min(abs(z - pole(s, j)) for j in range(-3, 4))


def test_family_identities_on_random_points():
    rng = np.random.default_rng(20)
    checked = 0
    for s in _random_slices(rng, 1000):
        z = complex(rng.uniform(-3.0, 3.0), rng.uniform(-4.0, 4.0))
        if _pole_distance(s, z) < 0.1:
            continue
        checked += 1
        w = evaluate(s, z)
        j = branch_index(s, z)
        assert abs(inverse_branch(s, j, w) - z) <= 1e-10 * max(1.0, abs(z))
        assert abs(evaluate(s, z + 1j * math.pi) - w) <= 1e-12 * max(1.0, abs(w))
        slope = derivative(s, z)
        assert abs(slope - central_difference(s, z)) <= 1e-6 * max(1.0, abs(slope))
    assert checked > 900


@pytest.fixture
def tight_family_config(monkeypatch):
    monkeypatch.setenv("ATLAS_POLE_TOLERANCE", "1e-3")
    monkeypatch.setenv("ATLAS_OVERFLOW_GUARD", "5")
    monkeypatch.setenv("ATLAS_BRANCH_WINDOW", "2")
    family_config.cache_clear()
    yield family_config()
    monkeypatch.undo()
    family_config.cache_clear()


def test_environment_tunables_reach_the_family(tight_family_config):
    s = make_slice(RHO, 1.0)
    assert tight_family_config.pole_tolerance == 1e-3
    assert is_infinity(evaluate(s, pole(s, 0) + 1e-4))
    assert not is_infinity(evaluate(s, pole(s, 0) + 1e-4, pole_tol=1e-12))
    assert evaluate(s, 6.0 + 0.2j) == s.lam
    assert evaluate_array(np.array([s.lam]), np.array([s.mu]), np.array([-6.0 + 0j]))[0] == s.mu
    assert branch_index(s, 0.3 + 0.2j + 2j * math.pi) == 2
