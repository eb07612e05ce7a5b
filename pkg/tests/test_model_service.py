import cmath
import math
from dataclasses import replace

import numpy as np
import pytest

from models.dynamics import FatouCoordinate
from models.errors import ConfigError, InadmissibleWord, NotInK0
from models.itinerary import Itinerary
from services.family_service import inverse_branch, iterate_with_derivative, pole
from services.model_service import (coordinate_chart, enumerate_periodic_points,
                                    enumerate_prepoles, fixed_point_preimage, in_k0,
                                    path_tail_diameters, periodic_point, point_from_coordinate,
                                    prepole_point, real_multiplier_scan, resolve_point,
                                    tanh_conjugacy_seed, tree_path, tree_root)

RHO = 2.0 / 3.0


def test_model_parameter_matches_the_tanh_conjugacy(model):
    lam, q = tanh_conjugacy_seed(RHO)
    assert model.lambda0 == pytest.approx(lam, abs=1e-9)
    assert model.q0 == pytest.approx(q, abs=1e-9)
    assert model.lambda0.real == pytest.approx(2.021, abs=1e-3)
    assert model.mu0.real == pytest.approx(-0.399, abs=1e-3)


def test_real_scan_finds_lambda0(model):
    roots = real_multiplier_scan(RHO)
    assert min(abs(x - model.lambda0) for x in roots) < 1e-6


def test_model_map_is_a_shifted_tanh(model):
    c = model.q0 / 2
    alpha = model.lambda0 - c
    for z in (0.3 + 0.2j, -1.1 + 0.7j, 2.5 - 0.4j):
        assert model.Q(z) == pytest.approx(c + alpha * cmath.tanh(z - c), rel=1e-9)


def test_symbolic_points(model):
    c = model.q0 / 2
    assert periodic_point(model, Itinerary.parse("|0")) == pytest.approx(c, abs=1e-10)
    assert prepole_point(model, Itinerary.finite(0)) == pole(model.slice, 0)
    assert pole(model.slice, 0) == pytest.approx(c + 0.5j * math.pi, abs=1e-12)
    assert fixed_point_preimage(model, Itinerary.finite(1)) == pytest.approx(
        model.q0 + 1j * math.pi, abs=1e-10)
    assert resolve_point(model, Itinerary.parse("1|0")) == pytest.approx(
        inverse_branch(model.slice, 1, c), abs=1e-10)


def test_resolvers_reject_the_infinity_symbol(model):
    with pytest.raises(InadmissibleWord):
        resolve_point(model, Itinerary.infinity())
    with pytest.raises(InadmissibleWord):
        prepole_point(model, Itinerary.parse("|0"))


def test_basin_membership(model):
    assert in_k0(model, model.q0 + 0.3)
    assert not in_k0(model, 0.1 + 0j)


def test_chart_round_trip(model):
    x = model.lin.koenigs_inverse(0.5 * model.r0 * cmath.exp(0.7j))
    base = coordinate_chart(model, x)
    assert base.word == ()
    assert base.r == pytest.approx(0.5 * model.r0, rel=1e-9)

    z = inverse_branch(model.slice, 1, x)
    coordinate = coordinate_chart(model, z)
    assert coordinate.word == (1,)
    assert coordinate.domain_kind == "B"
    assert coordinate.r == pytest.approx(0.5 * model.r0 / RHO, rel=1e-9)
    assert coordinate.t == pytest.approx(0.7, abs=1e-9)
    assert point_from_coordinate(model, coordinate) == pytest.approx(z, abs=1e-9)


def test_inadmissible_coordinates(model):
    with pytest.raises(InadmissibleWord):
        point_from_coordinate(model, FatouCoordinate.from_angle((1,), model.r0 / RHO, 0.0))
    with pytest.raises(InadmissibleWord):
        point_from_coordinate(model, FatouCoordinate.from_angle((0,), 0.5 * model.r0 / RHO, 0.0))
    with pytest.raises(InadmissibleWord):
        point_from_coordinate(model, FatouCoordinate.from_angle((), -1.0, 0.0))


def test_chart_is_punctured_at_lambda0(model):
    with pytest.raises(NotInK0):
        coordinate_chart(model, model.lambda0)
    with pytest.raises(NotInK0):
        coordinate_chart(model, 0.05 + 0j)


def test_periodic_tree_path_lands(model):
    path = tree_path(model, Itinerary.parse("|0"), depth=80)
    assert path.samples[0][1] == tree_root(model)
    assert path.terminal == pytest.approx(model.q0 / 2, abs=1e-5)
    diameters = path_tail_diameters(path)
    assert all(b <= a + 1e-12 for a, b in zip(diameters, diameters[1:]))
    assert diameters[60] < 1e-3 * diameters[0]


def test_finite_tree_path_runs_into_the_pole(model):
    path = tree_path(model, Itinerary.finite(0))
    assert path.terminal == pytest.approx(pole(model.slice, 0), abs=1e-3)
    assert path.landing_steps == 1
    assert path.chart_offsets
    assert min(path.chart_offsets) >= path.final_branch_start
    times = [t for t, _ in path.samples]
    assert times == sorted(times)


def test_tree_path_rejects_bad_targets(model):
    with pytest.raises(InadmissibleWord):
        tree_path(model, Itinerary.infinity())
    with pytest.raises(InadmissibleWord):
        tree_path(model, Itinerary.finite(0), samples_per_branch=1)


def test_enumeration_over_a_symbol_window(model):
    prepoles = enumerate_prepoles(model, 1, window=1)
    assert sorted(prepoles) == [(-1,), (0,), (1,)]
    assert prepoles[(1,)] == pole(model.slice, 1)
    assert len(enumerate_prepoles(model, 2, window=1)) == 9
    cycles = enumerate_periodic_points(model, 1, window=1)
    assert cycles[(0,)] == pytest.approx(model.q0 / 2, abs=1e-10)
    for z in cycles.values():
        assert model.Q(z) == pytest.approx(z, abs=1e-9)
    with pytest.raises(InadmissibleWord):
        enumerate_prepoles(model, 1, window=-1)


def test_fundamental_domain_bookkeeping(model):
    b_domain = FatouCoordinate.from_angle((1,), 0.5 * model.r0 / RHO, 0.3)
    assert b_domain.domain_kind == "B"
    assert b_domain.shell_index(model.r0, RHO) == 1
    a_domain = FatouCoordinate.from_angle((2, 0), 0.8 * model.r0 / RHO ** 2, 0.3)
    assert a_domain.domain_kind == "A"
    assert a_domain.shell_index(model.r0, RHO) is None
    assert a_domain.n == 2
    assert a_domain.theta == pytest.approx(0.3 + math.pi)


def test_resolvers_commute_with_the_shift(model):
    for word, point in enumerate_prepoles(model, 2, window=1).items():
        assert model.Q(point) == pytest.approx(prepole_point(model, Itinerary.finite(word[1])),
                                               abs=1e-9)
    cycles = enumerate_periodic_points(model, 2, window=1)
    for (a, b), point in cycles.items():
        assert model.Q(point) == pytest.approx(cycles[(b, a)], abs=1e-9)


def test_tree_paths_need_a_real_multiplier(model):
    tilted = replace(model, slice=replace(model.slice, rho=complex(RHO, 0.1)))
    with pytest.raises(ConfigError):
        tree_path(tilted, Itinerary.finite(0))


def test_prepoles_over_a_wider_window(model):
    for order in (2, 3):
        prepoles = enumerate_prepoles(model, order, window=2)
        assert len(prepoles) == 5 ** order
        for word, point in prepoles.items():
            shifted = prepole_point(model, Itinerary.finite(*word[1:]))
            assert model.Q(point) == pytest.approx(shifted, abs=1e-9)


def test_cycles_over_a_wider_window(model):
    for period in (1, 2):
        cycles = enumerate_periodic_points(model, period, window=2)
        assert len(cycles) == 5 ** period
        for point in cycles.values():
            w, d = iterate_with_derivative(model.slice, point, period)
            assert abs(w - point) <= 1e-9
            assert abs(d) > 1.0


def _random_word(rng, n):
    return tuple(int(j) for j in rng.integers(-2, 3, n))


def test_random_chart_round_trips(model):
    rng = np.random.default_rng(13)
    rho_abs = abs(model.rho)
    for _ in range(200):
        word = _random_word(rng, int(rng.integers(1, 4)))
        low = 1.05 * rho_abs if word[-1] == 0 else 0.05
        radius = rng.uniform(low, 0.95) * model.r0
        t = rng.uniform(-math.pi, math.pi)
        coordinate = FatouCoordinate.from_angle(word, radius / rho_abs ** len(word), t)
        z = point_from_coordinate(model, coordinate)
        back = coordinate_chart(model, z)
        assert back.word == word
        assert back.r == pytest.approx(coordinate.r, rel=1e-9)
        assert abs(math.remainder(back.t - t, 2.0 * math.pi)) <= 1e-9
