import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parflow import kolmogorov as kl
from parflow.sde import coefficients as sc


def test_radix_exponent():
    for a in (0.1, 1 / 3, 0.5, 0.9, 1.7):
        assert kl.radix_exponent(a, 4) == a / 2
        assert kl.radix_exponent(a, 2) == a
        assert kl.radix_exponent(a, 8) == a / 3
    assert math.isclose(kl.radix_exponent(1.0, 3), math.log(2) / math.log(3))
    with pytest.raises(ValueError):
        kl.radix_exponent(1.0, 1)


def test_lattice_geometry():
    lat = kl.MixedRadixLattice((4, 2), 3)
    assert lat.shape() == (65, 9)
    assert lat.shape(1) == (5, 3)
    assert lat.stride(1) == (16, 4)
    assert lat.n_points(0) == 4
    assert np.allclose(lat.spacing(2), [1 / 16, 1 / 4])
    with pytest.raises(ValueError):
        lat.stride(4)
    with pytest.raises(ValueError):
        kl.MixedRadixLattice((1, 2), 3)


def test_coarse_levels_are_views_of_finest():
    lat = kl.MixedRadixLattice((4, 2), 3)
    fn = lambda t, x: np.sin(3 * t) + x**2
    u = kl.LatticeField.from_function(lat, fn)
    for m in range(4):
        mesh = np.meshgrid(*lat.coords(m), indexing="ij")
        assert np.array_equal(u.level(m), fn(*mesh))


def test_field_validation():
    lat = kl.MixedRadixLattice((2,), 3)
    with pytest.raises(ValueError):
        kl.LatticeField(lat, np.zeros(8))
    with pytest.raises(ValueError):
        kl.LatticeField(lat, np.full(9, np.nan))


def test_exact_zero_and_linear():
    lat = kl.MixedRadixLattice((2,), 6)
    zero = kl.LatticeField.from_function(lat, lambda z: 0.0 * z)
    lin = kl.LatticeField.from_function(lat, lambda z: z)
    for u, N in ((zero, 0.0), (lin, 1.0)):
        n = kl.increment_condition_level(u, 1.0).n_star
        assert n == 0
        cert = kl.holder_certificate(u, 1.0, n)
        assert cert.N_measured == N and cert.mode == "exhaustive"


def test_parabolic_lattice_time_field():
    # u = t on the (4, 2) lattice: increments 4^{-m} = 2^{-2m}
    lat = kl.MixedRadixLattice((4, 2), 4)
    u = kl.LatticeField.from_function(lat, lambda t, x: t)
    ok = kl.increment_condition_level(u, 2.0)
    assert ok.n_star == 0
    cert = kl.holder_certificate(u, 2.0, 0)
    assert cert.alpha_i == [1.0, 2.0]
    assert math.isclose(cert.N_measured, 1.0, rel_tol=1e-12)
    bad = kl.increment_condition_level(u, 2.1)
    assert bad.n_star is None and not bad.ok
    w = bad.witness
    assert w["axis"] == 0 and w["level"] == 4
    assert math.isclose(abs(w["z2"][0] - w["z1"][0]), 4.0**-4)
    assert w["increment"] > w["bound"]


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_n_star_monotone_in_alpha(a1, a2):
    lo, hi = sorted((a1, a2))
    lat = kl.MixedRadixLattice((2, 2), 5)
    u = kl.LatticeField.from_function(lat, lambda x, y: 0.3 * np.sin(4 * x) * np.cos(3 * y))
    n_lo = kl.increment_condition_level(u, lo).n_star
    n_hi = kl.increment_condition_level(u, hi).n_star
    if n_hi is not None:
        assert n_lo is not None and n_lo <= n_hi


def test_extension_at_lattice_points_and_rate():
    lat = kl.MixedRadixLattice((2,), 8)
    u = kl.LatticeField.from_function(lat, lambda z: z)
    assert kl.continuity_extension(u, [0.375], 3) == 0.375
    assert kl.continuity_extension(u, [1.0], 8) == 1.0
    seq = kl.extension_sequence(u, [1 / 3], 1.0, 1.0)
    errs = [abs(v - 1 / 3) for v in seq["values"]]
    assert all(e <= 2.0**-m for m, e in enumerate(errs))
    assert seq["within"]
    with pytest.raises(ValueError):
        kl.continuity_extension(u, [1.5], 3)


def test_cauchy_bound_on_smooth_field():
    lat = kl.MixedRadixLattice((2, 2), 6)
    u = kl.LatticeField.from_function(lat, lambda x, y: np.sin(3 * x) + 0.5 * np.cos(2 * y))
    alpha = 0.5
    n = kl.increment_condition_level(u, alpha).n_star
    assert n is not None
    cert = kl.holder_certificate(u, alpha, n)
    for q in ([1 / 3, 0.7], [0.123, 0.987], [math.pi / 4, 0.5]):
        assert kl.extension_sequence(u, q, cert.N_measured, alpha, start=n)["within"]


def test_sampled_certificate_and_recheck():
    lat = kl.MixedRadixLattice((2, 2), 4)
    u = kl.LatticeField.from_function(lat, lambda x, y: x + 2 * y)
    exact = kl.holder_certificate(u, 1.0, 0)
    sampled = kl.holder_certificate(u, 1.0, 0, max_pairs=10, n_samples=50_000)
    assert exact.mode == "exhaustive" and sampled.mode == "sampled"
    assert sampled.N_measured <= exact.N_measured * (1 + 1e-12)
    assert abs(kl.recheck_certificate(u, exact) - exact.N_measured) / exact.N_measured <= 0.05


def test_certificate_needs_depth():
    lat = kl.MixedRadixLattice((2,), 3)
    u = kl.LatticeField.from_function(lat, lambda z: z)
    with pytest.raises(ValueError):
        kl.holder_certificate(u, 1.0, 3)


def test_vector_field_norm():
    lat = kl.MixedRadixLattice((2,), 4)
    u = kl.LatticeField.from_function(lat, lambda z: np.stack([3 * z, 4 * z], -1))
    assert u.vector
    assert math.isclose(kl.holder_certificate(u, 1.0, 0).N_measured, 5.0)


def _deterministic_flow(depth, d=2):
    g = np.arange(2**depth + 1) / 2**depth
    X = np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1)
    return np.broadcast_to(X, (1, 4**depth + 1) + X.shape)


def test_deterministic_flow_has_zero_time_moments():
    rep = kl.flow_holder_check(kl.FlowLattice.from_array(_deterministic_flow(4), 2), 1 / 6, 6, 3)
    assert max(rep["time_moment"]) == 0.0
    assert math.isclose(rep["spatial_modulus"], 1.0, rel_tol=1e-12)
    # only the level-0 diagonal increment sqrt(2) exceeds K = 1
    assert rep["p_fail"] == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_brownian_flow_lattice():
    fl = kl.FlowLattice.simulate(sc.identity(2), 4, 64, 0)
    kappa = 3
    alpha = 0.5 * (1 - 4 / (2 * kappa))
    rep = kl.flow_holder_check(fl, alpha, 2 * kappa, kappa)
    assert abs(rep["spatial_exponent"] - 1) < 1e-12
    assert abs(rep["spatial_modulus"] - 1) < 1e-12
    assert abs(rep["K_time"] / rep["brownian_K_time_reference"] - 1) < 0.15
    pf = rep["p_fail"]
    assert all(b <= a for a, b in zip(pf, pf[1:]))
    assert pf[-1] < pf[0]


def test_flow_check_validation():
    fl = kl.FlowLattice.from_array(_deterministic_flow(4), 2)
    with pytest.raises(ValueError):
        kl.flow_holder_check(fl, 0.1, 6, 2)  # kappa too small
    with pytest.raises(ValueError):
        kl.flow_holder_check(fl, 0.1, 4, 3)  # gamma < 2 kappa
    with pytest.raises(ValueError):
        kl.flow_holder_check(fl, 0.4, 6, 3)  # alpha above the admissible bound
    with pytest.raises(ValueError):
        kl.flow_holder_check(kl.FlowLattice.from_array(_deterministic_flow(3), 2), 0.1, 6, 3)


def test_gaussian_abs_moment():
    assert math.isclose(kl.gaussian_abs_moment(1, 2), 1.0)
    assert math.isclose(kl.gaussian_abs_moment(3, 2), 3.0)
    assert math.isclose(kl.gaussian_abs_moment(1, 4), 3.0)
