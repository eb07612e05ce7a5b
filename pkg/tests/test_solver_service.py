import math

import pytest

from models.dynamics import TargetKind
from models.errors import InfinityFlag, NoConvergence
from models.itinerary import Itinerary
from services.family_service import iterate_with_derivative, make_slice, pole
from services.solver_service import (dynamic_word, misiurewicz_solve, orbit_signature,
                                     parabolic_solve, solve_for_target, virtual_center_residual,
                                     virtual_center_solve)

RHO = 2.0 / 3.0
# the virtual center the model word "0" lands on: lambda is its own pole p_{-1}
CENTER = 0.967 - 2.217j


@pytest.fixture(scope="module")
def center():
    return virtual_center_solve(RHO, Itinerary.finite(-1), 0.97 - 2.2j)


def test_virtual_center_is_a_pole(center):
    assert center.kind == TargetKind.VIRTUAL_CENTER
    assert center.lam == pytest.approx(CENTER, abs=1e-3)
    assert center.residual <= 1e-10
    s = make_slice(RHO, center.lam)
    assert abs(center.lam - pole(s, -1)) <= 1e-9
    assert center.steps_to_infinity == 1
    assert center.orbit_word == [-1]


def test_conjugate_center(center):
    mirror = virtual_center_solve(RHO, Itinerary.finite(1), 1.0 + 2.2j)
    assert mirror.lam == pytest.approx(center.lam.conjugate(), abs=1e-9)


def test_labels_override_the_word(center):
    renamed = virtual_center_solve(RHO, Itinerary.finite(0), 0.97 - 2.2j, labels=[-1])
    assert renamed.word == "0"
    assert renamed.lam == pytest.approx(center.lam, abs=1e-9)
    with pytest.raises(NoConvergence):
        virtual_center_solve(RHO, Itinerary.finite(0), 0.97 - 2.2j, labels=[-1, 0])


def test_dynamic_word_reads_principal_labels(center):
    s = make_slice(RHO, center.lam)
    assert dynamic_word(s, 1) == [-1]
    with pytest.raises(InfinityFlag):
        dynamic_word(s, 2)
    steps, word = orbit_signature(s, 3)
    assert (steps, word) == (1, [-1])


def test_residual_vanishes_at_the_center(center):
    assert abs(virtual_center_residual(RHO, (-1,), center.lam)) <= 1e-9


def test_dispatch_on_finite_words(center):
    result = solve_for_target(RHO, Itinerary.finite(-1), 0.97 - 2.2j)
    assert result.lam == pytest.approx(center.lam, abs=1e-9)


def test_virtual_centers_need_finite_words():
    with pytest.raises(NoConvergence):
        virtual_center_solve(RHO, Itinerary.parse("|0"), 0.97 - 2.2j)


def test_cycle_solvers_validate_lengths():
    with pytest.raises(NoConvergence):
        parabolic_solve(RHO, 0, 1.0, 0.5)
    with pytest.raises(NoConvergence):
        misiurewicz_solve(RHO, 0, 1, 1.0, 0.5)


def test_record(center):
    record = center.to_record()
    assert record["kind"] == "virtual_center"
    assert record["rho"] == [RHO, 0.0]
    assert record["word"] == "-1"
    assert record["lambda_re"] == center.lam.real
    assert record["steps_to_infinity"] == 1
    assert record["orbit_word"] == [-1]
    assert "cycle_re" not in record
    assert record["tol"] == 1e-10


def test_orbit_signature_of_the_center(center):
    s = make_slice(RHO, center.lam)
    assert orbit_signature(s, 0) == (None, [])
    assert orbit_signature(s, 1)[0] == 1


def test_degenerate_solutions_are_rejected():
    # from this seed Newton on lambda - p_0(lambda) runs into lambda = 0
    with pytest.raises(NoConvergence):
        virtual_center_solve(RHO, Itinerary.finite(0), 0.5 + 0.5j)


def test_real_parabolic_fixed_point():
    result = parabolic_solve(RHO, 1, 1.87, 1.12, word="|0")
    assert result.kind == TargetKind.PARABOLIC
    assert result.lam.real == pytest.approx(1.8676, abs=2e-3)
    assert abs(result.lam.imag) < 1e-9
    assert abs(result.multiplier - 1.0) <= 1e-8
    w, d = iterate_with_derivative(make_slice(RHO, result.lam), result.cycle_point, 1)
    assert w == pytest.approx(result.cycle_point, abs=1e-9)
    assert d == pytest.approx(1.0, abs=1e-8)
    assert result.to_record()["tol"] == 1e-9


def test_misiurewicz_parameter_lands_on_a_repelling_fixed_point():
    result = misiurewicz_solve(RHO, 1, 1, 0.36 + 3.04j, 0.36 - 0.105j, word="1|0")
    assert result.kind == TargetKind.MISIUREWICZ_LIKE
    assert result.lam == pytest.approx(0.3588 + 3.0365j, abs=2e-3)
    assert abs(result.multiplier) > 1.0
    # f is pi i periodic, so the fixed point f(lambda) sits one period below lambda
    assert result.cycle_point == pytest.approx(result.lam - 1j * math.pi, abs=1e-9)
