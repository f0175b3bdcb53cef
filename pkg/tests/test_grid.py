import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parflow.grid import (ExponentialWeight, GridField, ParabolicCylinder, SpaceTimeGrid, ball_volume,
                          cell_lp_average, cylinder_mean, weighted_space_integral, weighted_spacetime_integral)
from parflow.profiles import l1_inverse_profile


def box2(n=16, nt=8):
    return SpaceTimeGrid.box((0, 1), (-1, 1), nt, n, 2)


@given(c=st.floats(0.0, 1e3), p=st.floats(1.0, 6.0), r=st.floats(0.3, 0.9))
def test_constant_field_mean(c, p, r):
    g = box2()
    C = ParabolicCylinder(0.0, (0.0, 0.0), r)
    assert cylinder_mean(GridField.constant(g, c), C, p) == pytest.approx(c, rel=1e-12, abs=0)


def test_constant_three_p2():
    g = box2()
    assert cylinder_mean(GridField.constant(g, 3.0), ParabolicCylinder(0.0, (0.1, -0.1), 0.5), 2.0) == 3.0


def test_zero_field_mean():
    assert cylinder_mean(GridField.constant(box2(), 0.0), ParabolicCylinder(0.0, (0, 0), 0.5), 2.5) == 0.0


def test_invalid_p_and_outside():
    g = box2()
    f = GridField.constant(g, 1.0)
    with pytest.raises(ValueError, match="exponent"):
        cylinder_mean(f, ParabolicCylinder(0.0, (0, 0), 0.5), 0.5)
    with pytest.raises(ValueError, match="outside"):
        cylinder_mean(f, ParabolicCylinder(5.0, (0, 0), 0.5), 2.0)


def test_l1_inverse_profile_cylinder_vs_refined_quadrature():
    # one cylinder C_1(0, 0) in d = 3, p = 5/2: grid cell averages vs a 4x finer oracle grid
    p = 2.5
    vals = []
    for nx in (16, 64):
        dx = 2.0 / nx
        g = SpaceTimeGrid(0.0, (-1.0,) * 3, 1.0, dx, 1, nx, 3)
        f = GridField.from_spatial_lp(g, l1_inverse_profile, p)
        vals.append(cylinder_mean(f, ParabolicCylinder(0.0, (0.0,) * 3, 1.0), p, normalize="full"))
    assert vals[0] == pytest.approx(vals[1], rel=0.02)


def test_weighted_integral_volume_and_zero():
    g = SpaceTimeGrid.box((0, 1), (-1, 1), 1, 64, 2)
    w = ExponentialWeight(0.0)
    assert weighted_space_integral(np.ones(g.spatial_shape), g, w) == pytest.approx(4.0, abs=1e-6)
    assert weighted_space_integral(np.zeros(g.spatial_shape), g, w) == 0.0


def test_weighted_integral_polar_closed_form():
    g = SpaceTimeGrid.box((0, 1), (-20, 20), 1, 400, 2)
    val = weighted_space_integral(np.ones(g.spatial_shape), g, ExponentialWeight(1.0))
    assert val == pytest.approx(2 * math.pi, rel=0.01)


@given(c=st.floats(-50, 50))
def test_spacetime_integral_linear(c):
    g = SpaceTimeGrid.box((0, 2), (-1, 1), 8, 16, 2)
    w = ExponentialWeight(0.0)
    one = weighted_spacetime_integral(GridField.constant(g, 1.0), w, 0.5, 1.5)
    assert one == pytest.approx(4.0, abs=1e-6)
    assert weighted_spacetime_integral(GridField.constant(g, c), w, 0.5, 1.5) == pytest.approx(c * one, abs=1e-9)


def test_spacetime_integral_separable_hats():
    hat = lambda s: np.maximum(0.0, 1 - np.abs(s))
    g = SpaceTimeGrid.box((0, 1), (-1, 1), 64, 128, 2)
    f = GridField.from_function(g, lambda t, xs: np.sin(np.pi * t) * hat(xs[0]) * hat(xs[1]))
    val = weighted_spacetime_integral(f, ExponentialWeight(0.0), 0.0, 1.0)
    assert val == pytest.approx((2 / np.pi) * 1.0 * 1.0, rel=0.01)


def test_ball_volume():
    assert ball_volume(2) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)


def test_cell_lp_average_polynomial_exact():
    c = np.array([[0.3, -0.2], [1.0, 2.0]])
    out = cell_lp_average(lambda x: x[:, 0] + 2.0, c, 0.5, 1.0, tol=1e-12)
    assert np.allclose(out, c[:, 0] + 2.0, rtol=1e-12)


def test_field_validation():
    g = box2()
    with pytest.raises(ValueError):
        GridField.from_array(g, np.full(g.shape, np.nan))
