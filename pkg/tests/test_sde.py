import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from parflow import profiles, rng
from parflow.sde import coefficients as sc, checks
from parflow.sde.flow import euler_maruyama, simulate_flow
from parflow.sde.polynomials import DirectionalPolynomial, polynomial_ball_bound

A = np.array([[-1.0, 0.5], [-0.3, -0.8]])


# random numbers ----------------------------------------------------------------------

def test_normals_are_keyed_not_sequential():
    paths = np.arange(40)
    full = rng.normals(7, paths, 3, 2)
    assert np.array_equal(full[10:25], rng.normals(7, paths[10:25], 3, 2))
    assert np.array_equal(full[::-1], rng.normals(7, paths[::-1], 3, 2))
    assert not np.array_equal(full, rng.normals(8, paths, 3, 2))


def test_normals_moments():
    z = rng.normals(0, np.arange(200_000), 0, 1)[:, 0]
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01


def test_coarse_increment_is_sum_of_fine():
    paths = np.arange(16)
    coarse = rng.brownian_increment(3, paths, 2, 2, 0.01, substeps=4)
    fine = sum(rng.brownian_increment(3, paths, 8 + k, 2, 0.01) for k in range(4))
    assert np.allclose(coarse, fine, rtol=0, atol=1e-14)


def test_batches_reproduce_single_run():
    c = sc.linear(A)
    whole = euler_maruyama(c, 0.0, np.array([[0.1, 0.2]]), None, 0.5, 0.05, 30, 4)
    a = euler_maruyama(c, 0.0, np.array([[0.1, 0.2]]), None, 0.5, 0.05, 12, 4)
    b = euler_maruyama(c, 0.0, np.array([[0.1, 0.2]]), None, 0.5, 0.05, 18, 4, path_offset=12)
    assert np.array_equal(whole.x, np.concatenate([a.x, b.x]))


# scheme ------------------------------------------------------------------------------

def test_identity_eta_frozen_and_x_is_brownian():
    r = simulate_flow(sc.identity(2), 0.0, [0.0, 0.0], [0.7, -0.2], 1.0, 0.1, 20_000, 0)
    assert np.all(r.eta_paths[..., 0] == [0.7, -0.2])
    cov = np.cov(r.x_final.T)
    assert np.allclose(cov, np.eye(2), atol=0.04)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_eta_affine_in_initial_direction(u, v, a):
    c = sc.variable_sigma(2, 0.3)
    e1, e2 = np.array([1.0, u]), np.array([v, -0.8])
    E0 = np.stack([e1, e2, a * e1 + (1 - a) * e2], -1)[None]
    E = euler_maruyama(c, 0.0, np.array([[0.2, 0.1]]), E0, 0.3, 0.05, 16, 2).eta[:, 0]
    assert np.allclose(E[..., 2], a * E[..., 0] + (1 - a) * E[..., 1], rtol=0, atol=1e-12)


def test_linear_jacobian_matches_expm():
    J = simulate_flow(sc.linear(A), 0.0, [0.3, 0.0], None, 1.0, 1e-3, 4, 0, jacobian=True).eta_final
    assert np.allclose(J, J[0])  # additive noise: deterministic Jacobian
    err = np.linalg.norm(J[0] - expm(A)) / np.linalg.norm(expm(A))
    assert err < 1e-3
    assert np.allclose(checks.linear_flow_jacobian(A, 1.0), expm(A))


def test_strong_order_one_for_additive_noise():
    c = sc.singular(3, 0.1, 0.1)
    ref = euler_maruyama(c, 0.0, np.array([[0.3, 0.2, -0.1]]), None, 0.5, 0.0025, 400, 1).x
    errs = []
    for h in (0.02, 0.01):
        x = euler_maruyama(c, 0.0, np.array([[0.3, 0.2, -0.1]]), None, 0.5, h, 400, 1, base_h=0.0025).x
        errs.append(float(np.sqrt(((x - ref) ** 2).sum(-1)).mean()))
    assert errs[1] < 0.65 * errs[0]


def test_bad_step_rejected():
    with pytest.raises(ValueError):
        euler_maruyama(sc.identity(2), 0.0, np.zeros((1, 2)), None, 0.5, 0.3, 4, 0)
    with pytest.raises(ValueError):
        euler_maruyama(sc.identity(2), 0.0, np.zeros((1, 2)), None, 0.5, 0.05, 4, 0, base_h=0.03)


# coefficients and profiles -----------------------------------------------------------

@pytest.mark.parametrize("d", [2, 3, 4])
def test_singular_jacobian_vs_finite_differences(d):
    pts = np.random.default_rng(d).normal(size=(20, d))
    c = sc.singular(d, 0.3, 0.1)
    assert np.allclose(c.grad_b(0.2, pts), c.fd_grad_b(0.2, pts), atol=1e-6)


def test_critical_drift_jacobian_vs_finite_differences():
    pts = np.random.default_rng(0).normal(size=(10, 2))
    J = profiles.critical_drift_jacobian(0.3, pts, 0.2, 0.05)
    h = 1e-6
    fd = np.stack([(profiles.critical_drift(0.3, pts + h * e, 0.2, 0.05)
                    - profiles.critical_drift(0.3, pts - h * e, 0.2, 0.05)) / (2 * h) for e in np.eye(2)], -1)
    assert np.allclose(J, fd, atol=1e-6)


def test_singular_drift_size_away_from_mollifier():
    x = np.array([[0.5, -0.25, 1.0]])
    b = profiles.singular_drift(x, 2.0, 1e-8)
    assert math.isclose(np.linalg.norm(b), 2.0 / 1.75, rel_tol=1e-6)


def test_variable_sigma_gradient_and_ellipticity():
    c = sc.variable_sigma(2, 0.2)
    pts = np.random.default_rng(1).normal(size=(12, 2))
    assert np.allclose(c.grad_sigma(0.0, pts), c.fd_grad_sigma(0.0, pts), atol=1e-6)
    assert c.check_ellipticity(pts)["ok"]


def test_preset_parsing():
    assert sc.preset("linear:1,2,3,4", 2).b(0, np.array([[1.0, 0.0]]))[0].tolist() == [1.0, 3.0]
    with pytest.raises(ValueError):
        sc.preset("linear:1,2", 2)
    with pytest.raises(ValueError):
        sc.preset("nope", 2)


# bump derivatives --------------------------------------------------------------------

def test_bump_exact_for_identity_and_linear():
    for c in (sc.identity(2), sc.linear(A)):
        assert checks.jacobian_vs_bump(c, 0.0, [0.1, 0.2], [1.0, 0.0], 0.5, 0.05, 16, 1e-3) < 1e-9


def test_bump_first_order_for_singular_drift():
    r = checks.bump_slope(sc.singular(3, 0.1, 0.1), 0.0, [0.3, 0.2, -0.1], [1.0, 0.5, 0.2], 0.25, 1e-2, 32)
    assert all(0.8 <= s <= 1.2 for s in r["slopes"])


# chain rule --------------------------------------------------------------------------

def test_chain_rule_linear_f_exact():
    r = checks.chain_rule_residual(sc.identity(2), lambda y: 2 * y[..., 0] - y[..., 1], 0.0, [0.1, 0.2],
                                   [1.0, 0.5], 0.5, 2000, 0.05)
    assert abs(r.lhs - 1.5) < 1e-9 and r.residual < 1e-9


def test_chain_rule_quadratic_against_scheme_oracle():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([0.3, -0.2])
    x, eta, s, h = [0.4, -0.1], [1.0, 0.5], 0.5, 0.05
    f = lambda y: 0.5 * np.einsum("...i,ij,...j->...", y, Q, y) + y @ g
    r = checks.chain_rule_residual(sc.linear(A), f, 0.0, x, eta, s, 40_000, h, grad_f=lambda y: y @ Q + g)
    oracle = checks.quadratic_chain_oracle(A, Q, g, x, eta, s, h)
    assert r.within
    assert abs(r.lhs - oracle) <= 3 * r.raw_half_width
    assert abs(r.rhs - oracle) <= 3 * r.raw_half_width


def test_em_linear_moments_match_simulation():
    m, cov, _ = checks.em_linear_moments(A, [0.4, -0.1], 0.5, 0.05)
    X = euler_maruyama(sc.linear(A), 0.0, np.array([[0.4, -0.1]]), None, 0.5, 0.05, 40_000, 3).x[:, 0]
    assert np.allclose(X.mean(0), m, atol=0.015)
    assert np.allclose(np.cov(X.T), cov, atol=0.015)


# generator PDE -----------------------------------------------------------------------

def test_generator_zero_f():
    f = DirectionalPolynomial(2, (((0, 0), 0.0),))
    r = checks.generator_residual(sc.identity(2), f, 1.0, [0.5], [[0.0, 0.0]], [[0.5, 0.5]], 64, 0.05)
    assert r.residual.max() == 0.0


def test_generator_linear_drift_quadratic_f():
    f = DirectionalPolynomial(2, (((2, 0), 1.0), ((1, 1), 0.5), ((0, 2), 2.0)))
    r = checks.generator_residual(sc.linear(A), f, 1.0, [0.0, 0.5], [[0.2, 0.1], [-0.3, 0.4]],
                                  [[1.0, 0.5], [0.2, -0.7]], 16, 0.005, ht_steps=10, n_batches=4)
    assert not r.flagged.any()
    assert r.max <= 0.05


def test_generator_time_stencil_must_fit():
    f = DirectionalPolynomial(2, (((1, 0), 1.0),))
    with pytest.raises(ValueError):
        checks.generator_residual(sc.identity(2), f, 0.2, [0.0], [[0.0, 0.0]], [[1.0, 0.0]], 8, 0.05, ht_steps=3)


# weighted sup over directions -------------------------------------------------------

def test_weighted_sup_zero_f():
    f = DirectionalPolynomial(2, (((0, 0), 0.0),))
    r = checks.weighted_sup_eta_report(sc.identity(2), f, 1, 1.0, 1.0, 0.5, 3.0, 8, 8, 0.05)
    assert r["lhs"] == 0.0 and r["rhs_integral"] == 0.0 and r["N_min"] == 0.0


def test_weighted_sup_heat_closed_form():
    # u = (heat kernel * g)(x) eta_1 with g Gaussian: the L^2 ratio is 1 / (1 + T)
    g = lambda x: np.exp(-(np.asarray(x) ** 2).sum(-1) / 2)
    f = DirectionalPolynomial(2, (((1, 0), g),))
    r = checks.weighted_sup_eta_report(sc.identity(2), f, 1, 0.0, 1.0, 0.5, 5.0, 16, 1000, 0.1)
    assert abs(r["ratio"] * 1.5 - 1) <= 0.04
    assert math.isclose(r["ball_ratio"], r["ratio"], rel_tol=1e-9)


def test_exp_weight_cells_integral():
    g = checks._start_grid(12.0, 48, 2)
    total = checks.exp_weight_cells(g, 1.0).sum() * g.spatial_cell_volume
    assert math.isclose(total, 2 * math.pi, rel_tol=1e-3)


# weighted Jacobian moment -------------------------------------------------------------

def test_jacobian_moment_identity():
    r = checks.derivative_weighted_moment(sc.identity(2), 3, 0.5, 12.0, 32, 4, 0.05)
    exact = checks.identity_jacobian_value(2, 3)
    assert math.isclose(exact, 8 * 2 * math.pi, rel_tol=1e-14)
    assert abs(r["value"] - exact) / exact <= 0.02
    assert r["half_width"] == 0.0


def test_jacobian_moment_linear_matches_deterministic_value():
    r = checks.derivative_weighted_moment(sc.linear(A), 3, 0.5, 8.0, 16, 4, 0.05)
    v = checks.linear_jacobian_value(A, 0.5, 0.05, 3, 8.0, 16)
    assert math.isclose(r["value"], v, rel_tol=1e-10)


def test_jacobian_moment_requires_large_kappa():
    with pytest.raises(ValueError):
        checks.derivative_weighted_moment(sc.identity(2), 2, 0.5, 4.0, 8, 4, 0.05)


def test_matrix_norms():
    J = np.array([[3.0, 0.0], [0.0, 4.0]])
    assert checks.matrix_norm(J) == 5.0
    assert math.isclose(checks.matrix_norm(J, "operator"), 4.0)
    with pytest.raises(ValueError):
        checks.matrix_norm(J, "nuclear")


# sup moments ------------------------------------------------------------------------

def test_sup_moment_doob_band():
    r = checks.moment_sup_report(sc.identity(2), 2.0, 1.0, 0.01, 4000)
    # E|w_T|^2 <= E sup |w_s|^2 <= 4 E|w_T|^2
    assert 2.0 * 0.95 <= r["sup_moment_x"] <= r["doob_bound"]
    assert r["doob_bound"] == 8.0
    assert abs(r["m_fit"] - 2.0) < 1e-9


def test_sup_moment_reflection():
    r = checks.moment_sup_report(sc.sqrt_delta(2, 0.25), 2.0, 1.0, 0.005, 8000)
    assert math.isclose(r["reflection_moment"], 0.25, rel_tol=1e-12)
    assert 0.85 <= r["max_x1_moment"] / r["reflection_moment"] <= 1.05


def test_sup_moment_derivative_processes():
    # the x-difference of eta is linear in eta, so the fitted degree is q
    r = checks.moment_sup_report(sc.singular(3, 0.3, 0.1), 2.0, 0.5, 0.05, 64, x=[0.2, 0.1, -0.1], n_deriv=1)
    assert abs(r["m_fit"] - 2.0) < 1e-3 and r["sup_moment_x"] > 0
    lin = checks.moment_sup_report(sc.linear(A), 2.0, 0.5, 0.05, 16, n_deriv=1)
    assert max(lin["sup_moment_eta"]) < 1e-6  # eta does not depend on x
    with pytest.raises(ValueError):
        checks.moment_sup_report(sc.identity(2), 2.0, 0.5, 0.05, 8, n_deriv=2)


# polynomials ------------------------------------------------------------------------

def test_polynomial_disk_and_constant():
    d = polynomial_ball_bound([DirectionalPolynomial(2, (((1, 0), 1.0),))], [2.0])
    assert abs(d["ratio"] * math.pi / 4 - 1) <= 0.01
    c = polynomial_ball_bound([DirectionalPolynomial(2, (((0, 0), 1.3),))], [2.0])
    assert math.isclose(c["ratio"], 1 / math.pi, rel_tol=1e-12)


@given(st.floats(0.1, 50.0), st.floats(0.5, 4.0))
def test_polynomial_ratio_scale_invariant(s, p):
    B = DirectionalPolynomial(2, (((1, 1), 0.4), ((0, 2), -1.0)))
    r1 = polynomial_ball_bound([B], [p])["ratio"]
    r2 = polynomial_ball_bound([B.scaled(s)], [p])["ratio"]
    assert math.isclose(r1, r2, rel_tol=1e-10)


def test_polynomial_validation_and_merge():
    P = DirectionalPolynomial(2, (((1, 0), 1.0), ((1, 0), 2.0), ((0, 1), 0.0)))
    assert P.terms == (((1, 0), 3.0),)
    assert P.degree == 1
    with pytest.raises(ValueError):
        DirectionalPolynomial(2, (((1, 0, 0), 1.0),))
    with pytest.raises(ValueError):
        polynomial_ball_bound([DirectionalPolynomial(2, (((0, 0), 0.0),))], [1.0])
    with pytest.raises(ValueError):
        polynomial_ball_bound([P], [0.0])


def test_polynomial_evaluation():
    P = DirectionalPolynomial(2, (((2, 0), 1.0), ((1, 1), -2.0), ((0, 0), lambda x: x[..., 0])))
    x = np.array([[3.0, 0.0]])
    e = np.array([[1.0, 2.0]])
    assert P(x, e)[0] == 1.0 - 4.0 + 3.0
