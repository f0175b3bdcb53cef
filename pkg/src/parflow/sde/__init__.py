"""Euler-Maruyama flows with variational processes and Monte Carlo checks on them."""

from .coefficients import SdeCoefficients, identity, linear, preset, singular, sqrt_delta, variable_sigma
from .flow import EmResult, FlowEnsemble, euler_maruyama, simulate_flow
from .polynomials import DirectionalPolynomial, ball_bound_family, polynomial_ball_bound
from .checks import (chain_rule_residual, derivative_weighted_moment, generator_residual, jacobian_vs_bump,
                     moment_sup_report, weighted_sup_eta_report)

__all__ = [
    "SdeCoefficients", "identity", "linear", "preset", "singular", "sqrt_delta", "variable_sigma",
    "EmResult", "FlowEnsemble", "euler_maruyama", "simulate_flow",
    "DirectionalPolynomial", "ball_bound_family", "polynomial_ball_bound",
    "chain_rule_residual", "derivative_weighted_moment", "generator_residual", "jacobian_vs_bump",
    "moment_sup_report", "weighted_sup_eta_report",
]
