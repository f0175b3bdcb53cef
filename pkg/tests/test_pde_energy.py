import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parflow import pde_energy as pe
from parflow.grid import GridField, SpaceTimeGrid


def heat_grid(nx=48, L=8.0, d=2):
    dx = 2 * L / nx
    return SpaceTimeGrid(0.0, (-L,) * d, dx**2, dx, 1, nx, d)


def gaussian_terminal(g, v=0.5):
    return np.exp(-g.radius() ** 2 / (2 * v))


@pytest.mark.parametrize("rate", [1.0, 2.0])
def test_heat_closed_form(rate):
    g = heat_grid(64)
    v, T = 0.5, 1.0
    coef = pe.identity_coefficients(g, rate)
    sol = pe.solve_backward(coef, gaussian_terminal(g, v), T, dt=g.dx**2 / 4, theta=0.5)
    exact = pe.heat_gaussian(g.radius() ** 2, v, T, 2, rate)
    assert np.abs(sol.initial - exact).max() <= 0.01 * exact.max()


def test_zero_terminal():
    g = heat_grid(16)
    sol = pe.solve_backward(pe.identity_coefficients(g), np.zeros(g.spatial_shape), 0.5)
    assert not sol.u.any()
    rep = pe.energy_report(sol, 1, 1.0, 1.0, 0.5)
    assert rep.lhs_terminalless == rep.lhs_gradient == rep.terminal == 0.0
    assert pe.polynomial_weight_report(sol, 2.0, 1)["ratio"] == 0.0
    assert pe.uniform_drift_energy_report(sol, pe.identity_coefficients(g), 1)["ratio"] == 0.0


@pytest.mark.parametrize("n", [1, 4])
def test_heat_contraction(n):
    g = heat_grid(48)
    sol = pe.solve_backward(pe.identity_coefficients(g), gaussian_terminal(g), 1.0)
    rep = pe.energy_report(sol, n, 0.0, 1.0, 1.0)
    assert rep.ratio_terminal <= 1.02
    assert rep.lhs_gradient >= 0


def test_maximum_principle():
    g = heat_grid(32)
    f = np.cos(g.space_mesh()[0]) * gaussian_terminal(g, 4.0)
    sol = pe.solve_backward(pe.identity_coefficients(g), f, 1.0)
    assert sol.u.min() >= f.min() - 1e-10 and sol.u.max() <= f.max() + 1e-10


@given(seed=st.integers(0, 10_000))
def test_ibp_machine_precision(seed):
    rng = np.random.default_rng(seed)
    ops = pe.Operators.build(10, 2, 0.2)
    A = rng.normal(size=(10, 10, 2, 2))
    a = np.einsum("...ij,...kj->...ik", A, A) + np.eye(2)
    assert pe.ibp_defect(ops, a, rng.normal(size=(10, 10)), rng.normal(size=(10, 10))) <= 1e-12


def test_admissible_n():
    assert [n for n in range(1, 11) if pe.admissible_n(n)] == [1, 4, 6, 8, 10]
    with pytest.raises(ValueError, match="admissible"):
        pe.energy_report(pe.solve_backward(pe.identity_coefficients(heat_grid(8)),
                                           np.zeros((8, 8)), 0.1), 2, 0.0, 1.0, 0.1)


def test_polynomial_weight_s0_matches_unweighted():
    g = heat_grid(32)
    sol = pe.solve_backward(pe.identity_coefficients(g), gaussian_terminal(g), 0.5)
    w = pe.polynomial_weight_report(sol, 0.0, 4)
    rep = pe.energy_report(sol, 4, 0.0, 1.0, 0.5)
    assert w["ratio"] == pytest.approx(rep.ratio_terminal, rel=1e-12)


@pytest.mark.parametrize("xn", [0.0, 3.0, 10.0])
def test_weight_equivalence_oracle(xn):
    # the integrand has a kink at y = x, so the two quadratures agree to ~1e-5 rather than machine precision
    a = pe.polynomial_weight_equivalence(2, 2.0, [xn])[0]
    assert a == pytest.approx(pe.weight_equivalence_oracle(2, 2.0, xn), rel=1e-4)


def test_weight_equivalence_band():
    vals = pe.polynomial_weight_equivalence(2, 2.0, np.linspace(0, 10, 21))
    # at x = 0 the ratio is 2 pi int (1 + r)^2 r e^{-r} dr = 22 pi; it decreases towards 2 pi
    assert vals[0] == pytest.approx(22 * math.pi, rel=1e-10)
    assert np.all(np.diff(vals) < 0)
    assert vals.min() > 2 * math.pi


def _shift_pair(nx, b=0.7, T=0.5):
    dx = 16 / nx
    g = SpaceTimeGrid(0.0, (-8.0, -8.0), dx**2, dx, 1, nx, 2)
    f = np.exp(-g.radius() ** 2)
    heat = pe.solve_backward(pe.identity_coefficients(g), f, T, dt=dx**2 / 2)
    a = GridField(g, np.broadcast_to(np.eye(2).ravel(), g.shape + (4,)), 4)
    bvals = np.zeros(g.shape + (2,))
    bvals[..., 0] = b
    coef = pe.DivFormCoefficients(a, None, GridField(g, bvals, 2), 1.0)
    drift = pe.solve_backward(coef, f, T, dt=dx**2 / 2)
    r_heat = pe.energy_report(heat, 1, 0.0, 1.0, T).ratio_terminal
    r_drift = pe.energy_report(drift, 1, 0.0, 1.0, T).ratio_terminal
    return abs(r_drift / r_heat - 1), pe.uniform_drift_energy_report(drift, coef, 1)


def test_uniform_drift_shift_oracle():
    # a constant drift only translates u, so the L^2 ratio must equal the heat one; upwinding converges at O(dx)
    e1, rep = _shift_pair(48)
    e2, _ = _shift_pair(96)
    e3, _ = _shift_pair(192)
    assert e2 < 0.6 * e1 and e3 < 0.6 * e2
    assert e3 <= 0.02
    assert rep["drift_integral"] == pytest.approx(0.49 * 0.5, rel=1e-12)


def test_ellipticity_validation():
    g = heat_grid(8)
    bad = GridField(g, np.broadcast_to(np.array([1.0, 2.0, 0.0, 1.0]), g.shape + (4,)), 4)
    with pytest.raises(ValueError, match="symmetric"):
        pe.DivFormCoefficients(bad)
    with pytest.raises(ValueError, match="eigenvalues"):
        pe.identity_coefficients(g, 3.0, delta=0.5)


def test_minimal_N_reproduces_bound():
    g = heat_grid(32)
    sol = pe.solve_backward(pe.identity_coefficients(g), gaussian_terminal(g), 1.0)
    rep = pe.energy_report(sol, 1, 1.0, 1.0, 1.0)
    again = pe.energy_report(sol, 1, 1.0, 1.0, 1.0, N_config=rep.N_min_terminal * (1 + 1e-9))
    assert again.passes
