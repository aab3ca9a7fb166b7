import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import fields as fl
from artifact import geometry as geo
from artifact.errors import NormalizationError, PoleError

KAPPAS = [2.0, 8 / 3, 4.0, 6.0]


class LogHol:
    """``c log z`` with its derivatives, a minimal holomorphic part."""

    def __init__(self, c):
        self.c = c

    def __call__(self, z):
        return self.c * np.log(z)

    def d1(self, z):
        return self.c / z

    def d2(self, z):
        return -self.c / z**2


def minus_arg():
    # -arg z = 2 Re((i/2) log z)
    return fl.PrePreSchwarzian(4.0, LogHol(0.5j), mu=0j, constant=0.0)


# -- evaluation and brackets ---------------------------------------------------


def test_chordal_drift_at_i():
    delta = fl.table_pair(fl.CHORDAL, 4.0).delta
    assert fl.vf_eval(delta, geo.HALFPLANE, 1j) == pytest.approx(-2j)


def test_radial_sigma_in_disk():
    # sigma^H = -sqrt(kappa)(1 + z^2) pushed to the disk is -2i sqrt(kappa) z,
    # because 1 + tau^2 = 4z/(1+z)^2 and tau' = -2i/(1+z)^2
    sigma = fl.table_pair(fl.RADIAL, 1.0).sigma
    assert fl.vf_eval(sigma, geo.DISK, 0.5) == pytest.approx(-1j, abs=1e-14)
    # the pure rotation -i z comes from half of that field
    assert fl.vf_eval(sigma.scale(0.5), geo.DISK, 0.5) == pytest.approx(-0.5j, abs=1e-14)


def test_identity_chart_leaves_field_unchanged():
    v = fl.RationalField.quadratic(1, 2, 3)
    z = 0.3 + 0.7j
    assert fl.vf_eval(v, geo.HALFPLANE, z) == v(z)


def test_pole_evaluation_raises():
    with pytest.raises(PoleError):
        fl.vf_eval(fl.RationalField((2,), (-1j, 1)), geo.HALFPLANE, 1j)


def test_bracket_examples():
    v = fl.RationalField.laurent(2)
    w = fl.RationalField.quadratic(-1)
    # [2/z, -1] = (2/z)*0 - (-2/z^2)(-1) = -2/z^2
    assert fl.lie_bracket(v, w).equals(fl.RationalField((-2,), (0, 0, 1)))
    assert fl.lie_bracket(v, v).is_zero()
    z_field = fl.RationalField.quadratic(0, 1)
    one = fl.RationalField.quadratic(1)
    assert fl.lie_bracket(z_field, one).equals(fl.RationalField.quadratic(-1))


small = st.integers(min_value=-5, max_value=5).map(Fraction)


@st.composite
def laurent_fields(draw):
    return fl.RationalField.laurent(*(draw(small) for _ in range(4)))


@settings(max_examples=40, deadline=None)
@given(laurent_fields(), laurent_fields(), laurent_fields())
def test_jacobi_identity_exact(a, b, c):
    br = fl.lie_bracket
    total = br(a, br(b, c)) + br(b, br(c, a)) + br(c, br(a, b))
    assert total.is_zero()


@settings(max_examples=40, deadline=None)
@given(laurent_fields(), laurent_fields())
def test_bracket_antisymmetric(a, b):
    assert (fl.lie_bracket(a, b) + fl.lie_bracket(b, a)).is_zero()


def test_pushforward_matches_chart_field():
    # pushing sigma forward by a Moebius map m is the same as evaluating
    # m'(u) sigma(u) at u = m^{-1}(z)
    sigma = fl.RationalField.quadratic(-1.3, 0.4, 0.7)
    m = np.array([[2.0, 1.0], [0.5, 0.75]])
    z = 0.2 + 1.1j
    u = geo.mobius_apply(geo.mobius_inverse(m), z)
    expect = geo.mobius_deriv(m, u) * sigma(u)
    assert sigma.pushforward(m)(z) == pytest.approx(expect, rel=1e-12)


# -- transforms -----------------------------------------------------------------


def test_scale_identity_and_factor_two():
    p = fl.table_pair(fl.CHORDAL, 3.0)
    same = fl.transform_scale(p, 1.0)
    assert same.coefficients == p.coefficients
    d, s = fl.transform_scale(p, 2.0).coefficients
    assert d[0] == pytest.approx(8.0)
    assert s[0] == pytest.approx(-2 * math.sqrt(3.0))


def test_r_zero_is_identity():
    p = fl.table_pair(fl.DIPOLAR, 3.0, nu=0.2)
    assert fl.transform_r(p, 0) is p


def test_r_moves_right_fixed_row_to_half_plane_form():
    # r_{+1}(z) = z/(1 - z) takes the right-fixed row to
    # (2/z + kappa + 2 xi z, -sqrt(kappa)(1 + 2z))
    k, xi = 3.0, 0.3
    d, s = fl.transform_r(fl.table_pair(fl.RIGHT_FIXED, k, xi=xi), 1.0).coefficients
    assert np.allclose(d, (2, k, 2 * xi, 0), atol=1e-12)
    assert np.allclose(s, (-math.sqrt(k), -2 * math.sqrt(k), 0), atol=1e-12)


def test_r_minus_one_on_left_fixed_row_gives_mirror():
    k, xi = 3.0, 0.3
    d, s = fl.transform_r(fl.table_pair(fl.LEFT_FIXED, k, xi=xi), -1.0).coefficients
    assert np.allclose(d, (2, -k, 2 * xi, 0), atol=1e-12)
    assert np.allclose(s, (-math.sqrt(k), 2 * math.sqrt(k), 0), atol=1e-12)


def test_drift_insert():
    p = fl.table_pair(fl.CHORDAL, 5.0)
    assert fl.drift_insert(p, 0) is p
    d, _ = fl.drift_insert(p, 0.8).coefficients
    assert d[:2] == pytest.approx((2, -0.8))


@pytest.mark.parametrize("family", fl.FAMILIES)
def test_drift_invariant_survives_transforms(family):
    p = fl.table_pair(family, 2.5, nu=0.4, xi=0.3)
    nu0 = fl.drift_invariant(*p.coefficients)
    for q in (fl.transform_scale(p, 1.7), fl.transform_r(p, 0.6), fl.transform_r(p, -0.3)):
        assert fl.drift_invariant(*q.coefficients) == pytest.approx(nu0, abs=1e-10)


def test_classify_examples():
    fam, k, nu, _ = fl.classify(fl.pair_from_coefficients((2, -0.5, 0, 0), (-2, 0, 0)))
    assert (fam, k, nu) == (fl.CHORDAL, pytest.approx(4.0), pytest.approx(0.5))
    r = math.sqrt(3.0)
    fam, _, nu, _ = fl.classify(fl.pair_from_coefficients((2, 0, 2, 0), (-r, 0, -r)))
    assert fam == fl.RADIAL and nu == pytest.approx(0.0)
    fam, _, _, xi = fl.classify(fl.pair_from_coefficients((2, 0, 0.6, 0), (-r, 0, 0)))
    assert fam == fl.CHORDAL_TIME_CHANGE and xi == pytest.approx(0.3)


@pytest.mark.parametrize("family", fl.FAMILIES)
@pytest.mark.parametrize("kappa", KAPPAS)
def test_classify_recovers_rows_after_scrambling(family, kappa):
    nu = 0.0 if family in (fl.CHORDAL_TIME_CHANGE, fl.RIGHT_FIXED, fl.LEFT_FIXED) else 0.7
    p = fl.table_pair(family, kappa, nu=nu, xi=0.3)
    scrambled = fl.transform_scale(p, 1.9)
    fam, k, nu_c, xi_c = fl.classify(scrambled)
    assert fam == family
    assert k == pytest.approx(kappa)
    if family in (fl.CHORDAL, fl.DIPOLAR, fl.RADIAL):
        assert nu_c == pytest.approx(nu)
    if family in (fl.CHORDAL_TIME_CHANGE, fl.RIGHT_FIXED, fl.LEFT_FIXED):
        assert xi_c == pytest.approx(0.3)


def test_normalize_rejects_bad_residue():
    with pytest.raises(NormalizationError):
        fl.pair_from_coefficients((-2, 0, 0, 0), (-1, 0, 0))


def test_chi_vanishes_only_at_four():
    assert fl.chi_from_kappa(4.0) == 0.0
    assert fl.chi_from_kappa(2.0) == pytest.approx(math.sqrt(2) / 2)
    assert fl.mu_from_kappa(2.0) == pytest.approx(0.5j * fl.chi_from_kappa(2.0))


# -- Lie derivatives ---------------------------------------------------------------


def test_lie_derivative_of_minus_arg_along_constant_field():
    sigma = fl.RationalField.quadratic(-2)
    eta = minus_arg()
    analytic = fl.lie_deriv_pps(sigma, eta, geo.HALFPLANE, 1j, method="analytic")
    # oracle: d/ds of -arg(i - 2s) at s = 0, central differences
    h = 1e-5
    oracle = (-np.angle(1j - 2 * h) + np.angle(1j + 2 * h)) / (2 * h)
    assert oracle == pytest.approx(-2.0, abs=1e-8)
    assert analytic == pytest.approx(oracle, abs=1e-8)
    flow = fl.lie_deriv_pps(sigma, eta, geo.HALFPLANE, 1j, method="flow")
    assert flow == pytest.approx(analytic, abs=1e-7)


def test_constant_observable_is_annihilated():
    const = fl.ScalarObservable(lambda z: 3.0 + 0 * np.real(z))
    p = fl.table_pair(fl.RADIAL, 2.0, nu=0.3)
    assert fl.diffusion_apply(p, const, geo.HALFPLANE, [0.5 + 1j]) == 0.0


def test_diffusion_of_arg_matches_grid_stencil():
    kappa = 2.0
    p = fl.table_pair(fl.CHORDAL, kappa)
    arg = fl.ScalarObservable(lambda z: np.angle(z))
    z0 = 0.7 + 1.2j
    got = fl.diffusion_apply(p, arg, geo.HALFPLANE, [z0])
    # generator of dZ = (2/Z) dt - sqrt(kappa) dB on a real function
    h = 1e-3
    f = lambda dx, dy: np.angle(z0 + dx + 1j * dy)
    fx = (-f(2 * h, 0) + 8 * f(h, 0) - 8 * f(-h, 0) + f(-2 * h, 0)) / (12 * h)
    fy = (-f(0, 2 * h) + 8 * f(0, h) - 8 * f(0, -h) + f(0, -2 * h)) / (12 * h)
    fxx = (-f(2 * h, 0) + 16 * f(h, 0) - 30 * f(0, 0) + 16 * f(-h, 0) - f(-2 * h, 0)) / (12 * h * h)
    d = 2 / z0
    oracle = d.real * fx + d.imag * fy + 0.5 * kappa * fxx
    assert abs(oracle) > 0.1
    assert got == pytest.approx(oracle, abs=1e-5)


@pytest.mark.parametrize("chart", [geo.HALFPLANE, geo.DISK, geo.STRIP])
def test_flow_of_complete_field_is_chart_covariant(chart):
    sigma = fl.table_pair(fl.DIPOLAR, 3.0).sigma
    w = 0.4 + 0.8j
    z = geo.from_halfplane(chart, w, 0, 0)[0]
    moved, _ = fl.flow(sigma, chart, z, 0.3, nsteps=64)
    direct, _ = fl.flow(sigma, geo.HALFPLANE, w, 0.3, nsteps=64)
    assert geo.to_halfplane(chart, moved, 0)[0] == pytest.approx(direct, abs=1e-9)
