"""Euler-Maruyama for the flow ``x_s`` and its variational processes ``eta_s``.

With ``x_{n+1} = x_n + b h + sigma dW`` the variational update

    eta_{n+1} = eta_n + (Db eta_n) h + sigma_{(eta_n)} dW

is the exact derivative of the discrete map, so ``eta`` is affine in its
initial value to round-off and agrees with finite differences of the scheme.
Coefficients are evaluated at ``t + r`` for a flow started at time ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from .coefficients import SdeCoefficients

GUARD = 1e8


def _n_steps(T: float, h: float) -> int:
    if not (h > 0 and T > 0):
        raise ValueError("need h > 0 and T > 0")
    n = int(round(T / h))
    if abs(n * h - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of h")
    return n


def _substeps(h: float, base_h: float | None) -> tuple:
    if base_h is None:
        return h, 1
    m = int(round(h / base_h))
    if m < 1 or abs(m * base_h - h) > 1e-9 * h:
        raise ValueError("h must be an integer multiple of base_h")
    return base_h, m


@dataclass
class EmResult:
    x: np.ndarray  # (M, P, d) final
    eta: np.ndarray | None  # (M, P, d, k) final
    excluded: np.ndarray  # (M,) bool
    sup_dx: np.ndarray | None  # (M, P) sup_s |x_s - x_0|
    sup_eta: np.ndarray | None  # (M, P, k) sup_s |eta_s|
    max_x1: np.ndarray | None  # (M, P) sup_s (x^1_s - x^1_0)
    records: list = field(default_factory=list)  # (s, x, eta) snapshots
    steps: int = 0


def euler_maruyama(coeffs: SdeCoefficients, t: float, x0: np.ndarray, eta0: np.ndarray | None, T: float,
                   h: float, M: int, seed: int, path_offset: int = 0, base_h: float | None = None,
                   record_every: int | None = None, guard: float = GUARD, step_offset: int = 0,
                   track_sup: bool = True) -> EmResult:
    """Batched scheme: ``M`` Brownian paths shared across ``P`` starting points.

    ``x0`` is ``(P, d)`` and ``eta0`` is ``(P, d, k)`` (``k`` directions) or None.
    Path ``m`` uses the key ``path_offset + m`` so batches can be split freely;
    step ``k`` uses the key ``step_offset + k``, so flows started at different
    times can share the increments of their common time interval.
    ``track_sup=False`` skips the running suprema (they are then None).
    """
    d, d1 = coeffs.d, coeffs.d1
    x0 = np.asarray(x0, float).reshape(-1, d)
    n = _n_steps(T, h)
    bh, sub = _substeps(h, base_h)
    X = np.broadcast_to(x0, (M,) + x0.shape).copy()
    E = None
    if eta0 is not None:
        eta0 = np.asarray(eta0, float).reshape(x0.shape[0], d, -1)
        E = np.broadcast_to(eta0, (M,) + eta0.shape).copy()
    excluded = np.zeros(M, bool)
    sup_dx = np.zeros(X.shape[:2]) if track_sup else None
    max_x1 = np.zeros(X.shape[:2]) if track_sup else None
    sup_eta = None if (E is None or not track_sup) else np.sqrt((E**2).sum(-2))
    paths = path_offset + np.arange(M)
    records = []
    if record_every:
        records.append((0.0, X.copy(), None if E is None else E.copy()))
    for k in range(n):
        tk = t + k * h
        dW = rng.brownian_increment(seed, paths, step_offset + k, d1, bh, sub)
        if coeffs.constant_sigma:
            # additive noise: one matrix for all points
            noise = (dW @ coeffs.sigma(tk, x0[:1])[0].T)[:, None, :]
        else:
            noise = np.einsum("mpij,mj->mpi", coeffs.sigma(tk, X), dW)
        Xn = X + coeffs.b(tk, X) * h + noise
        bad = ~(np.abs(Xn).max(axis=(1, 2)) < guard)
        if E is not None:
            En = E + np.matmul(coeffs.grad_b(tk, X), E) * h
            if not coeffs.constant_sigma:
                En += np.einsum("mpikl,mplq,mk->mpiq", coeffs.grad_sigma(tk, X), E, dW)
            bad |= ~(np.abs(En).max(axis=(1, 2, 3)) < guard)
        excluded |= bad
        if excluded.any():
            keep = ~excluded
            X[keep] = Xn[keep]
            if E is not None:
                E[keep] = En[keep]
        else:
            X = Xn
            if E is not None:
                E = En
        if track_sup:
            if E is not None:
                np.maximum(sup_eta, np.sqrt((E**2).sum(-2)), out=sup_eta)
            disp = X - x0
            np.maximum(sup_dx, np.sqrt((disp**2).sum(-1)), out=sup_dx)
            np.maximum(max_x1, disp[..., 0], out=max_x1)
        if record_every and (k + 1) % record_every == 0:
            records.append(((k + 1) * h, X.copy(), None if E is None else E.copy()))
    return EmResult(X, E, excluded, sup_dx, sup_eta, max_x1, records, n)


@dataclass
class FlowEnsemble:
    M: int
    h: float
    T: float
    t0: float
    x0: tuple
    eta0: np.ndarray | None
    seed: int
    times: np.ndarray
    x_paths: np.ndarray  # (M, R, d)
    eta_paths: np.ndarray | None  # (M, R, d, k)
    excluded: np.ndarray
    sup_dx: np.ndarray
    sup_eta: np.ndarray | None
    max_x1: np.ndarray
    shared_noise: bool = True
    base_h: float | None = None

    @property
    def x_final(self) -> np.ndarray:
        return self.x_paths[:, -1]

    @property
    def eta_final(self) -> np.ndarray | None:
        return None if self.eta_paths is None else self.eta_paths[:, -1]

    @property
    def n_excluded(self) -> int:
        return int(self.excluded.sum())

    @property
    def excluded_fraction(self) -> float:
        return self.n_excluded / self.M


def simulate_flow(coeffs: SdeCoefficients, t: float, x, eta, T: float, h: float, M: int, seed: int,
                  base_h: float | None = None, record_every: int = 1, jacobian: bool = False,
                  path_offset: int = 0) -> FlowEnsemble:
    """Simulate ``(x_s, eta_s)`` for ``s`` in ``[0, T]`` from ``(t, x, eta)``.

    ``eta`` may be a vector (one direction) or a ``(d, k)`` matrix; with
    ``jacobian=True`` the identity is used so ``eta_s`` is the full ``Dx_s``.
    """
    d = coeffs.d
    x = np.asarray(x, float).reshape(1, d)
    if jacobian:
        e0 = np.eye(d)[None]
    elif eta is None:
        e0 = None
    else:
        e = np.asarray(eta, float)
        e0 = (e.reshape(d, 1) if e.ndim == 1 else e.reshape(d, -1))[None]
    res = euler_maruyama(coeffs, t, x, e0, T, h, M, seed, path_offset, base_h, record_every)
    times = np.array([r[0] for r in res.records]) if res.records else np.array([T])
    if res.records:
        xp = np.stack([r[1][:, 0] for r in res.records], 1)
        ep = None if e0 is None else np.stack([r[2][:, 0] for r in res.records], 1)
    else:
        xp = res.x[:, None, 0]
        ep = None if e0 is None else res.eta[:, None, 0]
    return FlowEnsemble(M, h, T, t, tuple(x[0]), None if e0 is None else e0[0], seed, times, xp, ep,
                        res.excluded, res.sup_dx[:, 0], None if res.sup_eta is None else res.sup_eta[:, 0],
                        res.max_x1[:, 0], True, base_h)


def ensemble_from_arrays(arrs: dict, seed: int = -1) -> FlowEnsemble:
    """Rebuild a (record-complete) ensemble read back from a PFLD paths chunk."""
    x = arrs["x_paths"]
    M, R, d = x.shape
    h = arrs["h"]
    times = np.linspace(0.0, arrs["T"], R) if R > 1 else np.array([arrs["T"]])
    eta = arrs["eta_paths"]
    disp = x - x[:, :1]
    return FlowEnsemble(M, h, arrs["T"], arrs["t0"], tuple(x[0, 0]), None if eta is None else eta[0, 0], seed,
                        times, x, eta, arrs["excluded"], np.sqrt((disp**2).sum(-1)).max(1),
                        None if eta is None else np.sqrt((eta**2).sum(-2)).max(1), disp[..., 0].max(1))
