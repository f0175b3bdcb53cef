import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parflow import riesz
from parflow.acceptance import bump, gaussian_mass_constant
from parflow.grid import GridField, SpaceTimeGrid


def test_kernel_unit_point_and_indicator():
    assert riesz.kernel_eval(riesz.KernelSpec(2.0, 4.0), 1.0, 0.0, 2) == 1.0
    assert riesz.kernel_eval(riesz.KernelSpec(2.0, 4.0), -1.0, 3.0, 2) == 0.0
    v = riesz.kernel_eval(riesz.KernelSpec(1.0, 8.0), 2.0, 2.0, 3)
    assert v == pytest.approx(0.25 * math.exp(-0.25), rel=1e-15)


@given(s=st.floats(1e-3, 10), r=st.floats(0, 10), alpha=st.floats(0.2, 3.5), k=st.floats(0.5, 10))
def test_kernel_positive_iff_s_positive(s, r, alpha, k):
    spec = riesz.KernelSpec(alpha, k)
    assert riesz.kernel_eval(spec, s, r, 2) >= 0
    assert riesz.kernel_eval(spec, -s, r, 2) == 0


def grid(n=16):
    return SpaceTimeGrid.box((0, 0.5), (-1, 1), n, n, 2)


def bump_field(g, amp=1.0, tc=0.25):
    return GridField.from_function(g, lambda t, xs: amp * bump(t, xs, tc, (0, 0), 0.2, 0.7))


def test_zero_potential():
    assert not riesz.potential(riesz.KernelSpec(2.0, 4.0), GridField.constant(grid(), 0.0)).any()


@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(a, b):
    g = grid(12)
    f1, f2 = bump_field(g), bump_field(g, tc=0.3).map(lambda v: v * np.cos(3 * v))
    spec = riesz.KernelSpec(2.0, 4.0)
    lhs = riesz.potential(spec, GridField(g, a * f1.values + b * f2.values, 1))
    rhs = a * riesz.potential(spec, f1) + b * riesz.potential(spec, f2)
    scale = max(np.abs(riesz.potential(spec, f1)).max(), 1e-300)
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale * (abs(a) + abs(b) + 1)


def test_monotonicity():
    g = grid(12)
    f = bump_field(g)
    spec = riesz.KernelSpec(2.0, 4.0)
    lo, hi = riesz.potential(spec, f, path="direct"), riesz.potential(spec, f.scaled(1.5), path="direct")
    assert np.all(hi >= lo) and lo.min() >= 0
    # the transform path is monotone up to round-off
    lo, hi = riesz.potential(spec, f), riesz.potential(spec, f.scaled(1.5))
    assert np.all(hi >= lo - 1e-12 * lo.max()) and lo.min() >= 0


def test_translation_covariance():
    g = SpaceTimeGrid.box((0, 0.5), (-2, 2), 16, 32, 2)
    f = GridField.from_function(g, lambda t, xs: bump(t, xs, 0.2, (0, 0), 0.15, 0.5))
    fs = GridField(g, np.roll(f.values, 1, axis=1), 1)
    spec = riesz.KernelSpec(2.0, 4.0)
    P, Ps = riesz.potential(spec, f), riesz.potential(spec, fs)
    inner = (slice(None), slice(2, -2), slice(None))
    assert np.allclose(np.roll(P, 1, axis=1)[inner], Ps[inner], atol=1e-10 * P.max())


def test_fft_and_direct_paths_agree():
    g = grid(12)
    f = bump_field(g)
    spec = riesz.KernelSpec(2.0, 4.0)
    a = riesz.apply_potential(spec, f, path="fft").field.values
    b = riesz.apply_potential(spec, f, path="direct").field.values
    assert np.linalg.norm(a - b) <= 1e-6 * np.linalg.norm(b)


def test_potential_against_refined_grid():
    # (alpha, k) = (2, 4) on a Gaussian bump, coarse grid vs 4x finer grid restricted to coarse cells
    f_fn = lambda t, xs: np.exp(-((t - 0.25) / 0.08) ** 2 - (xs[0] ** 2 + xs[1] ** 2) / 0.1)
    spec = riesz.KernelSpec(2.0, 4.0)
    coarse = SpaceTimeGrid.box((0, 0.5), (-1, 1), 16, 16, 2)
    fine = SpaceTimeGrid.box((0, 0.5), (-1, 1), 64, 64, 2)
    cut = riesz.Cutoffs(time_horizon=1.0)
    pc = riesz.potential(spec, GridField.from_function(coarse, f_fn), cutoffs=cut)
    pf = riesz.potential(spec, GridField.from_function(fine, f_fn), cutoffs=riesz.Cutoffs(time_horizon=2.0))
    pf_c = pf.reshape(16, 4, 16, 4, 16, 4).mean(axis=(1, 3, 5))
    assert np.linalg.norm(pc - pf_c) / np.linalg.norm(pf_c) <= 0.02


def test_heat_representation_constant():
    g = SpaceTimeGrid.box((0, 0.5), (-1, 1), 32, 32, 2)
    u = GridField.from_function(g, lambda t, xs: bump(t, xs, 0.25, (0, 0), 0.2, 0.8))
    chk = riesz.heat_representation_residual(u)
    assert chk.residual <= 0.05
    assert chk.c_est == pytest.approx(gaussian_mass_constant(2), rel=0.05)
    assert riesz.heat_representation_residual(GridField.constant(g, 0.0)).residual == 0.0


def test_gaussian_oracle_matches_closed_form():
    for d in (1, 2, 3):
        assert gaussian_mass_constant(d) == pytest.approx(riesz.heat_constant(d), rel=1e-12)


def test_semigroup_two_fields():
    g = SpaceTimeGrid.box((0, 1), (-2, 2), 24, 24, 2)
    f1 = GridField.from_function(g, lambda t, xs: bump(t, xs, 0.8, (0, 0), 0.15, 0.6))
    f2 = GridField.from_function(g, lambda t, xs: bump(t, xs, 0.7, (0.3, -0.2), 0.2, 0.5))
    c1 = riesz.semigroup_residual(1.0, 1.0, 8.0, f1)
    c2 = riesz.semigroup_residual(1.0, 1.0, 8.0, f2)
    assert c1.residual <= 0.05 and c2.residual <= 0.05
    assert abs(c1.c_est - c2.c_est) / abs(c1.c_est) <= 0.10
    z = riesz.semigroup_residual(1.0, 1.0, 8.0, GridField.constant(g, 0.0))
    assert z.residual == 0.0


def test_semigroup_closed_form_frozen():
    # (pi k)^{d/2} B(1/2, 1/2) at d = 2, k = 8 equals 8 pi^2
    assert riesz.semigroup_constant(1.0, 1.0, 8.0, 2) == pytest.approx(8 * math.pi**2, rel=1e-14)


def test_derivative_domination():
    zero = riesz.derivative_domination_report(1, 2.0, 4.0, [GridField.constant(grid(), 0.0)])
    assert zero.N_est == 0.0 and zero.all_excluded
    reports = []
    for n in (16, 32):
        g = SpaceTimeGrid.box((0, 0.5), (-1, 1), n, n, 2)
        f = GridField.from_function(g, lambda t, xs: bump(t, xs, 0.2, (0, 0), 0.15, 0.5))
        reports.append(riesz.derivative_domination_report(1, 2.0, 4.0, [f]))
        twice = riesz.derivative_domination_report(1, 2.0, 4.0, [f.scaled(2.0)])
        assert twice.N_est == pytest.approx(reports[-1].N_est, rel=1e-12)
    a, b = (r.N_est for r in reports)
    assert math.isfinite(a) and abs(b - a) / a <= 0.2
