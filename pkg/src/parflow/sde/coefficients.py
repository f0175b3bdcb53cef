"""SDE coefficients ``(sigma, b)`` with spatial derivatives, and named presets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import profiles

Array = np.ndarray


@dataclass(frozen=True)
class SdeCoefficients:
    """``sigma(t, x) -> (..., d, d1)`` and ``b(t, x) -> (..., d)`` for points ``x`` of shape ``(..., d)``.

    ``dsigma`` returns ``(..., d, d1, d)`` with last index the derivative
    direction and ``db`` returns ``(..., d, d)``.  Missing derivatives fall
    back to centred differences with step ``h_fd``.  ``constant_sigma``
    skips derivative work for additive noise.
    """

    d: int
    d1: int
    sigma: Callable
    b: Callable
    dsigma: Callable | None = None
    db: Callable | None = None
    delta: float = 1.0
    h_fd: float = 1e-5
    constant_sigma: bool = False
    name: str = "custom"
    eps_mol: float | None = None

    def __post_init__(self):
        if self.d1 < self.d:
            raise ValueError("need d1 >= d")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")

    def grad_sigma(self, t, x: Array) -> Array:
        if self.constant_sigma:
            return np.zeros(x.shape[:-1] + (self.d, self.d1, self.d))
        if self.dsigma is not None:
            return self.dsigma(t, x)
        return _fd(lambda y: self.sigma(t, y), x, self.h_fd)

    def grad_b(self, t, x: Array) -> Array:
        if self.db is not None:
            return self.db(t, x)
        return _fd(lambda y: self.b(t, y), x, self.h_fd)

    def fd_grad_b(self, t, x: Array) -> Array:
        return _fd(lambda y: self.b(t, y), x, self.h_fd)

    def fd_grad_sigma(self, t, x: Array) -> Array:
        return _fd(lambda y: self.sigma(t, y), x, self.h_fd)

    def check_ellipticity(self, points: Array, t: float = 0.0) -> dict:
        s = self.sigma(t, points)
        a = s @ np.swapaxes(s, -1, -2)
        ev = np.linalg.eigvalsh(a.reshape(-1, self.d, self.d))
        ok = ev.min() >= self.delta * (1 - 1e-12) and ev.max() <= (1 + 1e-12) / self.delta
        return {"ok": bool(ok), "eig_min": float(ev.min()), "eig_max": float(ev.max())}


def _fd(fn, x: Array, h: float) -> Array:
    """Centred differences; derivative index appended last."""
    cols = []
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, -1)


def _const_sigma(d: int, scale: float = 1.0):
    eye = scale * np.eye(d)
    return lambda t, x: np.broadcast_to(eye, x.shape[:-1] + (d, d))


def identity(d: int) -> SdeCoefficients:
    return SdeCoefficients(d, d, _const_sigma(d), lambda t, x: np.zeros_like(x),
                           db=lambda t, x: np.zeros(x.shape + (d,)), constant_sigma=True, name="identity")


def sqrt_delta(d: int, delta: float) -> SdeCoefficients:
    """``sigma = sqrt(delta) I``, ``b = 0``: the smallest noise allowed by ``delta``."""
    return SdeCoefficients(d, d, _const_sigma(d, math.sqrt(delta)), lambda t, x: np.zeros_like(x),
                           db=lambda t, x: np.zeros(x.shape + (d,)), delta=delta, constant_sigma=True,
                           name=f"sqrt-delta:{delta}")


def linear(A) -> SdeCoefficients:
    A = np.asarray(A, float)
    d = A.shape[0]
    return SdeCoefficients(d, d, _const_sigma(d), lambda t, x: x @ A.T,
                           db=lambda t, x: np.broadcast_to(A, x.shape + (d,)), constant_sigma=True,
                           name="linear")


def singular(d: int, c: float, eps: float, p0: float = 2.5) -> SdeCoefficients:
    """Mollified singular drift: ``c / (|x^1|+...+|x^d|)`` profile for ``d >= 3``, parabolic-critical for ``d = 2``."""
    if d >= 3:
        b = lambda t, x: profiles.singular_drift(x, c, eps)
        db = lambda t, x: profiles.singular_drift_jacobian(x, c, eps)
    else:
        b = lambda t, x: profiles.critical_drift(t, x, c, eps)
        db = lambda t, x: profiles.critical_drift_jacobian(t, x, c, eps)
    return SdeCoefficients(d, d, _const_sigma(d), b, db=db, constant_sigma=True,
                           name=f"singular:{c},{p0}", eps_mol=eps)


def variable_sigma(d: int, amp: float = 0.2) -> SdeCoefficients:
    """Smooth multiplicative noise ``sigma = I + amp * diag(sin x)``; ``delta`` from ``amp``."""
    def sigma(t, x):
        return np.eye(d) * (1 + amp * np.sin(x))[..., None, :]

    def dsigma(t, x):
        out = np.zeros(x.shape[:-1] + (d, d, d))
        idx = np.arange(d)
        out[..., idx, idx, idx] = amp * np.cos(x)
        return out

    lo = (1 - amp) ** 2
    hi = (1 + amp) ** 2
    return SdeCoefficients(d, d, sigma, lambda t, x: np.zeros_like(x), dsigma=dsigma,
                           db=lambda t, x: np.zeros(x.shape + (d,)), delta=min(lo, 1 / hi), name="variable-sigma")


def preset(spec: str, d: int, eps: float | None = None, delta: float | None = None) -> SdeCoefficients:
    """Parse ``identity``, ``linear:a11,a12,...``, ``singular:c,p0`` or ``sqrt-delta:delta``."""
    name, _, arg = spec.partition(":")
    if name == "identity":
        return identity(d)
    if name == "linear":
        vals = [float(v) for v in arg.split(",")] if arg else [-1.0] + [0.0] * (d * d - 2) + [-1.0]
        if len(vals) != d * d:
            raise ValueError(f"linear preset needs {d * d} matrix entries")
        return linear(np.array(vals).reshape(d, d))
    if name == "singular":
        parts = [float(v) for v in arg.split(",")] if arg else [0.1, 2.5]
        c = parts[0]
        p0 = parts[1] if len(parts) > 1 else 2.5
        return singular(d, c, 0.05 if eps is None else eps, p0)
    if name == "sqrt-delta":
        return sqrt_delta(d, float(arg) if arg else (0.25 if delta is None else delta))
    if name == "variable-sigma":
        return variable_sigma(d, float(arg) if arg else 0.2)
    raise ValueError(f"unknown coefficient preset {spec!r}; known: identity, linear:A, singular:c,p0, "
                     "sqrt-delta:delta, variable-sigma:amp")
