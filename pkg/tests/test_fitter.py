"""Detachment, continuation and lattice maps on a coarse (1/32) grid."""
import math

import pytest

from gravjet.errors import NoBracket, ParamError
from gravjet.flux_algebra import JetParameters, lambda_min
from gravjet.fitter import (Detacher, FitProblem, MapCell, detachment, fit, sign_change_loci,
                            sign_pattern, sweep_map, write_map)
from gravjet.freeboundary import extract_boundaries

JET = JetParameters(3, 1, 1, 2, 3)
DX = 1 / 32


@pytest.fixture(scope="module")
def problem():
    return FitProblem(JET, dx=DX)


@pytest.fixture(scope="module")
def detacher(problem):
    return Detacher(problem)


@pytest.fixture(scope="module")
def fitted(problem, detacher):
    return fit(problem, detacher)


def test_default_brackets(problem):
    lo, hi, qlo, qhi = problem.brackets()
    assert lo == pytest.approx(2.125 * (1 + 1e-6))
    assert hi == pytest.approx(20 * lo)
    assert (qlo, qhi) == pytest.approx((0.06, 2.94))
    assert problem.tolerance == 2 * DX


def test_tau_below_grid_resolution_is_rejected():
    with pytest.raises(ParamError):
        FitProblem(JET, dx=DX, tau=DX).validate()


def test_wide_jet_near_lambda_min(problem, detacher):
    k1, k2 = detachment(lambda_min(1.5, 3, 1, 1) + 0.05, 1.5, problem, detacher)
    assert k1 < -1 and k2 > 1


def test_large_lambda_pulls_jet_inward(problem, detacher):
    k1, k2 = detachment(40.0, 1.5, problem, detacher)
    assert k1 > -1 or k2 < 1


def test_detachment_decreases_with_q1(problem, detacher):
    ks = [detachment(6.0, q, problem, detacher) for q in (0.8, 1.1, 1.4)]
    tol = 1e-9
    for (a1, a2), (b1, b2) in zip(ks, ks[1:]):
        assert b1 <= a1 + tol and b2 <= a2 + tol


def test_fit_converges(fitted, problem):
    assert fitted.converged and not fitted.fallback_used
    assert 0 < fitted.q1_star < 3
    assert abs(fitted.F1) <= problem.tolerance and abs(fitted.F2) <= problem.tolerance
    assert fitted.solves <= problem.budget
    assert fitted.lambda_star > lambda_min(fitted.q1_star, 3, 1, 1)


def test_fitted_field_detaches_at_lips(fitted, problem):
    fb = extract_boundaries(fitted.final_field)
    assert fb.detach1 == pytest.approx(-1, abs=problem.tolerance)
    assert fb.detach2 == pytest.approx(1, abs=problem.tolerance)


def test_bracket_below_fit_value(fitted):
    pb = FitProblem(JET, dx=DX, lam_hi=0.5 * (2.125 + fitted.lambda_star * 0.6))
    with pytest.raises(NoBracket):
        fit(pb)


def test_single_cell_map_at_fitted_point(fitted, problem):
    cells = sweep_map([fitted.lambda_star], [fitted.q1_star], problem)
    assert sign_pattern(cells[0], problem.tolerance) == (0, 0)


def test_lattice_straddling_fit_is_ordered(fitted, problem, tmp_path):
    lams = [fitted.lambda_star - 0.8, fitted.lambda_star + 1.5]  # lambda_min(Q1* - 0.3) = 3.49
    q1s = [fitted.q1_star - 0.3, fitted.q1_star + 0.3]
    cells = sweep_map(lams, q1s, problem)
    pat = {(c.lam, c.q1): sign_pattern(c, problem.tolerance) for c in cells}
    (l0, l1), (q0, q1) = lams, q1s
    # F1 rises with lambda and falls with Q1; F2 falls with both
    assert pat[(l0, q0)][0] <= pat[(l1, q0)][0] and pat[(l0, q1)][0] <= pat[(l1, q1)][0]
    assert pat[(l0, q1)][0] <= pat[(l0, q0)][0] and pat[(l1, q1)][0] <= pat[(l1, q0)][0]
    assert pat[(l1, q0)][1] <= pat[(l0, q0)][1] and pat[(l1, q1)][1] <= pat[(l0, q1)][1]
    assert pat[(l0, q1)][1] <= pat[(l0, q0)][1] and pat[(l1, q1)][1] <= pat[(l1, q0)][1]
    loci = sign_change_loci(cells, lams, q1s, problem.tolerance)
    assert len(loci) == 1
    write_map(cells, tmp_path / "map.csv", problem.tolerance)
    assert len((tmp_path / "map.csv").read_text().splitlines()) == 5


def test_huge_lambda_has_no_wide_cell():
    pb = FitProblem(JET, dx=1 / 16)
    cells = sweep_map([40.0, 60.0], [0.5, 1.5, 2.5], pb)
    for c in cells:
        assert not c.error
        assert sign_pattern(c, pb.tolerance) != (-1, 1)


def test_failed_cells_are_skipped_by_loci():
    cells = [MapCell(1.0, 1.0, -2, 2), MapCell(1.0, 2.0, error="x"), MapCell(2.0, 1.0, 0, 0),
             MapCell(2.0, 2.0, 0, 0)]
    assert sign_pattern(cells[1], 0.1) is None
    assert sign_change_loci(cells, [1.0, 2.0], [1.0, 2.0], 0.1) == []


def test_weak_gravity_fit():
    jet = JetParameters(3, 1e-6, 1, 2, 3)
    pb = FitProblem(jet, dx=DX)
    res = fit(pb)
    assert res.converged
    f = res.final_field
    fb = extract_boundaries(f)
    speeds = [math.sqrt(2 * res.lambda_star - 2 * jet.g * y) for y in fb.samples[:, 1]]
    assert (max(speeds) - min(speeds)) / max(speeds) <= 1e-4
