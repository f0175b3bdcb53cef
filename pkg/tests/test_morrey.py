import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from parflow import morrey
from parflow.acceptance import l1_inverse_oracle
from parflow.grid import GridField, ParabolicCylinder, SpaceTimeGrid
from parflow.profiles import l1_inverse_profile, singular_drift


def grid2(n=16):
    return SpaceTimeGrid.box((0, 1), (-1, 1), 16, n, 2)


@given(c=st.floats(0.0, 100.0), rho=st.floats(0.3, 0.9))
def test_capped_constant(c, rho):
    rep = morrey.morrey_capped(GridField.constant(grid2(), c), morrey.MorreyParams(2.5, rho=rho), stride=4)
    assert rep.value == pytest.approx(rho * c, rel=1e-12, abs=1e-300)
    if c > 0:
        assert rep.argmax_cylinder.r == pytest.approx(rho)


def test_zero_fields():
    f = GridField.constant(grid2(), 0.0)
    assert morrey.morrey_capped(f, morrey.MorreyParams(2.5, rho=0.5)).value == 0.0
    assert morrey.morrey_homogeneous(f, morrey.MorreyParams(2.5, beta=1.0)).value == 0.0


def test_homogeneous_constant_grows_with_scan():
    f = GridField.constant(grid2(), 2.0)
    params = morrey.MorreyParams(2.5, beta=1.0)
    small = morrey.morrey_homogeneous(f, params, radii=[0.3, 0.5], stride=4).value
    big = morrey.morrey_homogeneous(f, params, radii=[0.3, 0.5, 0.9], stride=4).value
    assert small == pytest.approx(2.0 * 0.5)
    assert big == pytest.approx(2.0 * 0.9)


@given(c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
def test_homogeneity(c):
    g = grid2(12)
    f = GridField.from_function(g, lambda t, xs: np.exp(-xs[0] ** 2 - 3 * xs[1] ** 2) * (1 + t))
    params = morrey.MorreyParams(2.5, rho=0.6)
    a = morrey.morrey_capped(f, params, stride=3).value
    b = morrey.morrey_capped(f.scaled(c), params, stride=3).value
    assert b == pytest.approx(abs(c) * a, rel=1e-12)


def test_scan_monotone():
    g = grid2(12)
    f = GridField.from_function(g, lambda t, xs: np.cos(3 * xs[0]) ** 2 + t)
    params = morrey.MorreyParams(2.5, rho=0.8)
    coarse = morrey.morrey_capped(f, params, radii=[0.35, 0.8], stride=3).value
    fine = morrey.morrey_capped(f, params, radii=[0.35, 0.5, 0.8], stride=1).value
    assert fine >= coarse


def test_l1_inverse_profile_value_matches_oracle():
    nx = 48
    dx = 2.0 / nx
    g = SpaceTimeGrid(0.0, (-1.0,) * 3, 0.5 * dx**2, dx, 1, nx, 3)
    f = GridField.from_spatial_lp(g, l1_inverse_profile, 2.5)
    prof = morrey.origin_profile(f, 2.5, [0.25, 0.5, 1.0])
    assert np.allclose(prof, l1_inverse_oracle(2.5), rtol=0.05)


def test_l1_inverse_oracle_frozen():
    # spherical quadrature value, frozen
    assert l1_inverse_oracle(2.5) == pytest.approx(1.3935277248, rel=1e-8)


def test_indicator_check_constant_and_zero():
    g = SpaceTimeGrid.box((0, 1), (-1, 1), 16, 16, 2)
    C = ParabolicCylinder(0.0, (0.0, 0.0), 0.5)
    one = morrey.indicator_morrey_check(C, 0.5, 2.5, GridField.constant(g, 1.0), stride=2)
    assert one["holds"] and one["indicator_norm"] <= 0.5 * 1.05
    zero = morrey.indicator_morrey_check(C, 0.5, 2.5, GridField.constant(g, 0.0), stride=2)
    assert zero["indicator_b_norm"] == 0.0 and zero["b_hat"] == 0.0


def test_indicator_check_singular_drift():
    g = SpaceTimeGrid.box((0, 1), (-1, 1), 16, 16, 2)
    b = GridField(g, np.broadcast_to(singular_drift(g.space_points(), 0.1, 0.1), g.shape + (2,)), 2)
    rep = morrey.indicator_morrey_check(ParabolicCylinder(0.0, (0.0, 0.0), 0.5), 1.0, 2.5, b, stride=2)
    assert rep["holds"]
    assert rep["slack_indicator"] >= -0.05


def test_drift_split_second_component():
    g = SpaceTimeGrid.box((-2, 2), (-3, 3), 400, 24, 2)
    zero = GridField.constant(g, 0.0)
    assert morrey.drift_split_norms(zero, zero)[1] == 0.0
    gt = GridField.from_function(g, lambda t, xs: (1 + t**2) + 0 * xs[0])
    exact = integrate.quad(lambda t: (1 + t * t) ** 2, -2, 2)[0]
    assert morrey.drift_split_norms(zero, gt)[1] == pytest.approx(exact, rel=1e-4)
    sb = GridField.from_function(g, lambda t, xs: np.exp(-t**2) * np.abs(np.sin(np.hypot(xs[0], xs[1]))))
    oracle = integrate.quad(lambda t: np.exp(-2 * t * t), -2, 2)[0]
    assert morrey.drift_split_norms(zero, sb)[1] == pytest.approx(oracle, rel=0.01)


def test_invalid_params():
    with pytest.raises(ValueError):
        morrey.MorreyParams(0.5)
    with pytest.raises(ValueError):
        morrey.morrey_capped(GridField.constant(grid2(), 1.0), morrey.MorreyParams(2.5))
