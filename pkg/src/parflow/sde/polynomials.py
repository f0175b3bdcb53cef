"""Polynomials in a direction ``eta`` with ``x``-dependent coefficients, and the ball bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.stats import qmc

from ..grid import ball_volume

Coeff = Union[float, Callable]


@dataclass(frozen=True)
class DirectionalPolynomial:
    """``f(x, eta) = sum_alpha c_alpha(x) eta^alpha``; constant coefficients are merged."""

    d: int
    terms: tuple  # ((alpha, coeff), ...)

    def __post_init__(self):
        merged, other = {}, []
        for alpha, c in self.terms:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.d or min(alpha) < 0:
                raise ValueError("multi-index must have d nonnegative entries")
            if callable(c):
                other.append((alpha, c))
            else:
                merged[alpha] = merged.get(alpha, 0.0) + float(c)
        terms = tuple((a, c) for a, c in sorted(merged.items()) if c != 0.0) + tuple(other)
        object.__setattr__(self, "terms", terms)

    @property
    def degree(self) -> int:
        return max((sum(a) for a, _ in self.terms), default=0)

    def coefficients(self, x=None) -> np.ndarray:
        vals = []
        for _, c in self.terms:
            if callable(c):
                if x is None:
                    raise ValueError("x needed for x-dependent coefficients")
                vals.append(np.asarray(c(np.asarray(x, float)), float))
            else:
                vals.append(np.asarray(c, float))
        return np.array(vals) if vals else np.zeros(1)

    def coeff_norm(self, x=None) -> float:
        """``|A|``: the largest absolute coefficient."""
        return float(np.max(np.abs(self.coefficients(x))))

    def __call__(self, x, eta) -> np.ndarray:
        """``x`` is ``(..., d)`` or None (constant coefficients), ``eta`` is ``(..., d)``."""
        eta = np.asarray(eta, float)
        out = np.zeros(eta.shape[:-1]) if x is None else np.zeros(np.broadcast_shapes(
            np.shape(x)[:-1], eta.shape[:-1]))
        powers = {}
        for alpha, c in self.terms:
            mono = None
            for i, a in enumerate(alpha):
                if a:
                    if (i, a) not in powers:
                        powers[(i, a)] = eta[..., i] ** a if a > 1 else eta[..., i]
                    mono = powers[(i, a)] if mono is None else mono * powers[(i, a)]
            coef = c(x) if callable(c) else c
            out = out + (coef if mono is None else coef * mono)
        return out

    def scaled(self, s: float) -> "DirectionalPolynomial":
        return DirectionalPolynomial(self.d, tuple(
            (a, (lambda x, c=c: s * c(x)) if callable(c) else s * c) for a, c in self.terms))

    @classmethod
    def random(cls, rng: np.random.Generator, d: int, max_degree: int = 3, density: float = 0.6):
        alphas = [a for a in np.ndindex(*(max_degree + 1,) * d) if sum(a) <= max_degree]
        terms = [(a, float(rng.normal())) for a in alphas if rng.random() < density]
        if not terms:
            terms = [(alphas[rng.integers(len(alphas))], 1.0)]
        return cls(d, tuple(terms))


@lru_cache(maxsize=16)
def ball_points(d: int, n_cube: int) -> np.ndarray:
    """Unscrambled Sobol points of ``[-1, 1]^d`` that fall in the open unit ball."""
    m = int(round(math.log2(n_cube)))
    pts = 2 * qmc.Sobol(d, scramble=False).random_base2(m) - 1
    pts = pts[np.sum(pts**2, -1) < 1]
    pts.flags.writeable = False
    return pts


def sup_points(d: int, n: int = 64) -> np.ndarray:
    """Deterministic quasi-uniform set of ``n`` points in the unit ball."""
    m = 6
    while True:
        pts = ball_points(d, 2**m)
        if len(pts) >= n:
            return pts[:n]
        m += 1


def polynomial_ball_bound(polys, powers, n_samples: int = 2**14, x=None, floor: float = 1e-300) -> dict:
    """``prod |A_i|^{p_i}`` against ``int_{B_1} prod |A_i(eta)|^{p_i} d eta``."""
    polys = list(polys)
    powers = list(powers)
    if len(polys) != len(powers) or not polys:
        raise ValueError("need one power per polynomial")
    if min(powers) <= 0:
        raise ValueError("powers must be positive")
    d = polys[0].d
    pts = ball_points(d, n_samples)
    lhs = 1.0
    integrand = np.ones(len(pts))
    for A, p in zip(polys, powers):
        norm = A.coeff_norm(x)
        if norm == 0:
            raise ValueError("coefficient norm |A| must be positive")
        lhs *= norm**p
        xx = None if x is None else np.broadcast_to(np.asarray(x, float), pts.shape)
        integrand = integrand * np.abs(A(xx, pts)) ** p
    rhs = ball_volume(d) * float(integrand.mean())
    counter = rhs < floor
    return {"lhs": lhs, "rhs": rhs, "ratio": math.inf if counter else lhs / rhs, "counter_candidate": counter,
            "n_points": len(pts)}


def ball_bound_family(n_seeds: int = 1000, d: int = 2, max_degree: int = 3, n_samples: int = 2**14,
                      seed: int = 0) -> dict:
    """Max ratio over seeded random products of one or two polynomials."""
    best, worst = 0.0, -1
    counters = 0
    for s in range(n_seeds):
        rng = np.random.default_rng([seed, s])
        k = int(rng.integers(1, 3))
        polys = [DirectionalPolynomial.random(rng, d, max_degree) for _ in range(k)]
        powers = list(rng.uniform(0.5, 3.0, size=k))
        r = polynomial_ball_bound(polys, powers, n_samples)
        counters += r["counter_candidate"]
        if r["ratio"] > best:
            best, worst = r["ratio"], s
    return {"max_ratio": float(best), "worst_seed": worst, "n_seeds": n_seeds, "counter_candidates": counters}
