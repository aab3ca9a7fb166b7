from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import coupling as cp
from artifact import fields as fl
from artifact import geometry as geo
from artifact import gff
from artifact.errors import DomainError


def residuals(pair, kernel=gff.DIRICHLET, method="analytic", n=60, **kw):
    return cp.residual_system(cp.problem_for(pair, kernel, n, **kw), method)


# -- sample points -------------------------------------------------------------------


@pytest.mark.parametrize("chart", geo.CHARTS)
def test_sample_points_are_interior_and_distinct(chart):
    z = cp.sample_points(200, chart, seed=1)
    assert z.size == 200
    assert np.all(geo.interior_mask(chart, z))
    assert len(np.unique(np.round(z, 12))) == 200


def test_problem_rejects_bad_input():
    pair = fl.table_pair(fl.CHORDAL, 4.0)
    eta = gff.family_eta(pair)
    with pytest.raises(ValueError):
        cp.CouplingProblem(pair, gff.DIRICHLET, eta, [1j, 2j], fd_step=1e-2)
    with pytest.raises(DomainError):
        cp.CouplingProblem(pair, gff.DIRICHLET, eta, [1j, 1j])
    with pytest.raises(DomainError):
        cp.CouplingProblem(pair, gff.DIRICHLET, eta, [1j, -1j])


# -- residual system ------------------------------------------------------------------


def test_chordal_with_drift_is_coupled():
    rep = residuals(fl.table_pair(fl.CHORDAL, 4.0, nu=0.7), n=200)
    assert rep.verdict
    assert max(rep.r1_max, rep.r2_max, rep.r3_max) < 1e-6


def test_perturbed_order_breaks_martingale_equation():
    pair = fl.table_pair(fl.CHORDAL, 4.0, nu=0.7)
    mu = fl.mu_from_kappa(4.0) + 0.05j  # chi + 0.1
    rep = residuals(pair, mu=mu)
    assert rep.r1_max > 1e-2
    assert not rep.verdict


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_dirichlet_kernel_is_invariant_under_complete_fields(a, b, c):
    sigma = fl.RationalField.quadratic(a, b, c)
    z = cp.sample_points(40, geo.HALFPLANE, seed=2)
    zz, ww = cp.point_pairs(z)
    val = gff.lie_kernel_analytic(sigma, gff.CovarianceKernel(gff.DIRICHLET), geo.HALFPLANE, zz, ww)
    assert np.max(np.abs(val)) < 1e-10 * (1 + abs(a) + abs(b) + abs(c))


@pytest.mark.parametrize("kappa", [0.5, 2.0, 8 / 3, 6.0, 9.0])
def test_time_change_row_passes_for_every_kappa(kappa):
    assert residuals(fl.table_pair(fl.CHORDAL_TIME_CHANGE, kappa, xi=0.3)).verdict


def test_twisted_radial_kappa_four():
    assert residuals(fl.table_pair(fl.RADIAL, 4.0), gff.TWISTED).verdict


def test_flow_route_agrees_with_analytic_route():
    pair = fl.table_pair(fl.DIPOLAR, 8 / 3, nu=0.7)
    a = residuals(pair, n=20)
    f = residuals(pair, method="flow", n=20)
    assert f.verdict and a.verdict
    for key in ("r1", "r2", "r3"):
        assert np.max(np.abs(f.residuals[key] - a.residuals[key])) < 1e-4


def test_uncoupled_flow_route_fails():
    rep = residuals(fl.table_pair(fl.DIPOLAR, 3.0), gff.DIRICHLET_NEUMANN, method="flow", n=20)
    assert rep.r1_max > 1e-2 and not rep.verdict


@pytest.mark.parametrize("family", fl.FAMILIES)
def test_consistency_relation(family):
    nu = 0.7 if family in (fl.CHORDAL, fl.DIPOLAR, fl.RADIAL) else 0.0
    prob = cp.problem_for(fl.table_pair(family, 8 / 3, nu=nu, xi=0.3), n=60)
    assert cp.consistency_residual(prob) < 1e-9


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_verdicts_survive_time_scaling(c):
    coupled = fl.table_pair(fl.DIPOLAR, 4.0)
    other = fl.table_pair(fl.DIPOLAR, 3.0)
    assert residuals(fl.transform_scale(coupled, c), gff.DIRICHLET_NEUMANN).verdict
    assert not residuals(fl.transform_scale(other, c), gff.DIRICHLET_NEUMANN).verdict


@pytest.mark.parametrize("family", [fl.CHORDAL, fl.RIGHT_FIXED, fl.RADIAL])
@pytest.mark.parametrize("c", [-0.7, 0.4])
def test_moved_pairs_stay_coupled(family, c):
    # the general reciprocal-formula eta is used once the family label is dropped
    moved = replace(fl.transform_r(fl.table_pair(family, 3.0, nu=0.5, xi=0.3), c), family=fl.GENERAL)
    assert residuals(moved).verdict


def test_selection_scan_dipolar():
    grid = [(fl.DIPOLAR, k, nu, 0.0) for k in (3.0, 4.0, 5.0) for nu in (0.0, 0.5)]
    rows = cp.scan_selection(grid, gff.DIRICHLET_NEUMANN, n=40)
    passed = [(r["kappa"], r["nu"]) for r in rows if r["verdict"]]
    assert passed == [(4.0, 0.0)]
    table = cp.verdict_table(rows)
    assert table.count("pass") == 1 and table.count("fail") == 5


def test_scan_reports_errors_inline():
    rows = cp.scan_selection([(fl.CHORDAL, 2.0, 0.0, 0.0)], gff.TWISTED, n=10)
    assert "error" in rows[0] and rows[0]["verdict"] is False
    assert "ValueError" in cp.verdict_table(rows)


# -- Monte Carlo ------------------------------------------------------------------------


def test_zero_time_mc_is_exact():
    pair = fl.table_pair(fl.CHORDAL, 2.0)
    (res,) = cp.mc_martingale(pair, cp.M1_ETA, [1 + 1j], 0.0, 50, seed=0)
    assert res["mean"] == res["M0"]
    assert res["stderr"] == 0


def test_drift_estimate_for_coupled_family():
    pair = fl.table_pair(fl.CHORDAL, 2.0)
    out = cp.drift_estimate(pair, gff.family_eta(pair), 1 + 1j, 1e-3, 20000, seed=1)
    assert abs(out["estimate"]) < 3 * out["stderr"]
    assert abs(out["diffusion"]) < 1e-6


def test_drift_estimate_of_constant_is_zero():
    pair = fl.table_pair(fl.RADIAL, 2.0)
    const = fl.ScalarObservable(lambda z: 1.5 + 0 * np.real(z))
    out = cp.drift_estimate(pair, const, 0.5 + 1j, 1e-3, 200, seed=1)
    assert out["estimate"] == 0 and out["diffusion"] == 0


def test_drift_estimate_sees_uncoupled_drift():
    # arg z under chordal kappa = 2 without the order term has drift A(arg)
    pair = fl.table_pair(fl.CHORDAL, 2.0)
    arg = fl.ScalarObservable(lambda z: np.angle(z))
    out = cp.drift_estimate(pair, arg, 1 + 1j, 1e-3, 20000, seed=3)
    assert abs(out["diffusion"]) > 0.1
    assert abs(out["estimate"] - out["diffusion"]) < 4 * out["stderr"] + 0.05 * abs(out["diffusion"])
