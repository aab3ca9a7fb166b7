import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import geometry as geo
from artifact.errors import BranchError, DomainError


def test_disk_origin_goes_to_i():
    w, dw = geo.transition_eval(geo.Transition(geo.DISK, geo.HALFPLANE), 0j)
    assert w == pytest.approx(1j, abs=1e-15)
    # d/dz i(1 - z)/(1 + z) = -2i/(1 + z)^2
    assert dw == pytest.approx(-2j, abs=1e-15)


def test_identity_transition():
    z = 0.3 + 0.2j
    w, dw = geo.transition_eval(geo.Transition(geo.DISK, geo.DISK), z)
    assert w == z
    assert dw == 1


def test_strip_midline_goes_to_i():
    w, dw = geo.transition_eval(geo.Transition(geo.STRIP, geo.HALFPLANE), 1j * np.pi / 2)
    assert w == pytest.approx(1j, abs=1e-14)
    assert dw == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("src", geo.CHARTS)
@pytest.mark.parametrize("dst", geo.CHARTS)
def test_round_trip(src, dst):
    rng = np.random.default_rng(3)
    w = rng.uniform(-2, 2, 50) + 1j * rng.uniform(0.1, 2, 50)
    z = geo.from_halfplane(src, w, 0, 0)[0]
    there = geo.Transition(src, dst)(z)
    back = geo.Transition(dst, src)(there)
    assert np.max(np.abs(back - z)) < 1e-10


def test_chain_rule_disk_to_strip():
    z = np.array([0.1 + 0.2j, -0.4 + 0.1j, 0.5j])
    a = geo.Transition(geo.DISK, geo.HALFPLANE)
    b = geo.Transition(geo.HALFPLANE, geo.STRIP)
    direct = geo.Transition(geo.DISK, geo.STRIP)
    wa, da = a.derivatives(z, 1)
    wb, db = b.derivatives(wa, 1)
    wd, dd = direct.derivatives(z, 1)
    assert np.max(np.abs(wb - wd)) < 1e-12
    assert np.max(np.abs(db * da - dd)) < 1e-12


@pytest.mark.parametrize("chart", [geo.DISK, geo.STRIP, geo.LOG])
def test_higher_derivatives_match_differences(chart):
    z = geo.from_halfplane(chart, 0.4 + 0.9j, 0, 0)[0]
    t = geo.Transition(chart, geo.HALFPLANE)
    f, f1, f2, f3 = t.derivatives(z, 3)
    h = 1e-4
    d = lambda k: t.derivatives(z + h, k)[k] - t.derivatives(z - h, k)[k]
    assert d(0) / (2 * h) == pytest.approx(f1, rel=1e-7)
    assert d(1) / (2 * h) == pytest.approx(f2, rel=1e-7)
    assert d(2) / (2 * h) == pytest.approx(f3, rel=1e-6)


def test_disk_singular_point_rejected():
    with pytest.raises(DomainError):
        geo.transition_eval(geo.Transition(geo.DISK, geo.HALFPLANE), -1 + 1e-12j)


def test_exterior_point_rejected():
    with pytest.raises(DomainError):
        geo.transition_eval(geo.Transition(geo.HALFPLANE, geo.DISK), 1 - 1j)


def test_log_chart_has_no_image_of_center():
    with pytest.raises(BranchError):
        geo.Transition(geo.HALFPLANE, geo.LOG)(1j)


def test_log_branches_differ_by_two_pi():
    z0 = geo.Transition(geo.HALFPLANE, geo.LOG, 0)(0.5 + 0.5j)
    z2 = geo.Transition(geo.HALFPLANE, geo.LOG, 2)(0.5 + 0.5j)
    assert z2 - z0 == pytest.approx(4 * np.pi)


def test_branch_by_continuity_unwinds_a_loop():
    # a loop around i in H, mapped to the principal log values
    s = np.linspace(0, 2 * np.pi, 400)
    w = 1j + 0.5 * np.exp(1j * s)
    principal = geo.from_halfplane(geo.LOG, w, 0, 0)[0]
    cont = geo.log_branch_by_continuity(principal)
    assert np.max(np.abs(np.diff(cont))) < 0.1
    assert abs(abs(cont[-1] - cont[0]) - 2 * np.pi) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_random_automorphism_preserves_halfplane(seed):
    m = geo.random_halfplane_automorphism(np.random.default_rng(seed))
    assert np.linalg.det(m) == pytest.approx(1.0)
    z = np.array([1j, 2 + 0.1j, -3 + 5j])
    assert np.all(geo.mobius_apply(m, z).imag > 0)
    back = geo.mobius_apply(geo.mobius_inverse(m), geo.mobius_apply(m, z))
    assert np.max(np.abs(back - z)) < 1e-8 * (1 + np.max(np.abs(m)) ** 4)


def test_interior_masks():
    assert geo.interior_mask(geo.DISK, np.array([0.5, 1.0, 1.5])).tolist() == [True, False, False]
    assert geo.interior_mask(geo.STRIP, np.array([1j, 4j, 0])).tolist() == [True, False, False]
    assert geo.interior_mask(geo.HALFPLANE, np.array([1j, 1, -1j])).tolist() == [True, False, False]
