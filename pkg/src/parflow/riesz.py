"""Parabolic Riesz potentials ``P_{alpha,k}`` on space-time grids.

The kernel ``p_{alpha,k}(s, r) = s**(-(d+2-alpha)/2) exp(-r**2/(k s)) 1_{s>0}``
is integrated exactly over each spatial cell (a product of 1D error-function
differences) and numerically over each time-lag cell, so the discrete
operator is the exact potential of the piecewise-constant extension of the
field, sampled at cell centres.  The first lag cell ``(0, dt/2)`` contains the
time singularity and is integrated adaptively after the substitution
``s = tau**2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft, integrate, special

from .grid import GridField, SpaceTimeGrid


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    k: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.k > 0):
            raise ValueError("kernel needs alpha > 0 and k > 0")

    def exponent(self, d: int) -> float:
        return (d + 2 - self.alpha) / 2


def kernel_eval(spec: KernelSpec, s, r, d: int):
    """Pointwise kernel value; 0 for ``s <= 0``."""
    s = np.asarray(s, float)
    r = np.asarray(r, float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    out = np.where(pos, ss ** (-spec.exponent(d)) * np.exp(-(r**2) / (spec.k * ss)), 0.0)
    return out if out.ndim else float(out)


def semigroup_constant(alpha: float, beta: float, k: float, d: int) -> float:
    """Closed-form ``c`` with ``P_alpha P_beta = c P_{alpha+beta}`` (Gaussian convolution + Beta integral)."""
    return float((math.pi * k) ** (d / 2) * special.beta(alpha / 2, beta / 2))


def heat_constant(d: int) -> float:
    """``c`` in ``u = c P_{2,4}(u_t + Laplace u)``; negative with this sign convention."""
    return -((4 * math.pi) ** (-d / 2))


@dataclass(frozen=True)
class Cutoffs:
    time_horizon: float | None = None
    truncation_radius: float | None = None


@dataclass
class PotentialResult:
    field: GridField
    truncation_radius: float
    time_horizon: float
    tail_bound: float
    path: str = "fft"


def _axis_factor(sig: np.ndarray, offsets: np.ndarray, dx: float, k: float) -> np.ndarray:
    """``int_{(o-1/2)dx}^{(o+1/2)dx} exp(-y**2/(k sig)) dy`` for ``o >= 0``; shape (len(sig), len(o))."""
    s = np.sqrt(k * sig)[:, None]
    lo = (offsets - 0.5) * dx / s
    hi = (offsets + 0.5) * dx / s
    diff = np.where(offsets >= 1, special.erfc(lo) - special.erfc(hi), 2 * special.erf(hi))
    return 0.5 * math.sqrt(math.pi) * s * diff


def _outer(vec: np.ndarray, d: int) -> np.ndarray:
    out = vec
    for _ in range(d - 1):
        out = np.multiply.outer(out, vec)
    return out


@lru_cache(maxsize=12)
def kernel_weights(spec: KernelSpec, d: int, dt: float, dx: float, n_lag: int, n_off: int,
                   gauss_order: int = 10) -> np.ndarray:
    """Cell-integrated kernel ``W[lag, |o_1|, ..., |o_d|]`` (nonnegative offsets only)."""
    a = spec.exponent(d)
    offs = np.arange(n_off, dtype=float)
    W = np.zeros((n_lag,) + (n_off,) * d)

    # singular lag cell (0, dt/2), sigma = tau**2
    def integrand(tau):
        sig = np.array([max(tau, 1e-300) ** 2])
        e = _axis_factor(sig, offs, dx, spec.k)[0]
        return 2 * tau * sig[0] ** (-a) * _outer(e, d)

    W[0], _ = integrate.quad_vec(integrand, 0.0, math.sqrt(dt / 2), epsrel=1e-10, epsabs=0.0, norm="max",
                                 limit=200)
    gx, gw = np.polynomial.legendre.leggauss(gauss_order)
    for lag in range(1, n_lag):
        sig = (lag + gx / 2) * dt
        wts = gw / 2 * dt * sig ** (-a)
        e = _axis_factor(sig, offs, dx, spec.k)
        acc = np.zeros((n_off,) * d)
        for q in range(gauss_order):
            acc += wts[q] * _outer(e[q], d)
        W[lag] = acc
    W.flags.writeable = False
    return W


def _mirror(W: np.ndarray, d: int) -> np.ndarray:
    for ax in range(1, d + 1):
        n = W.shape[ax]
        W = np.concatenate([np.flip(np.take(W, np.arange(1, n), axis=ax), axis=ax), W], axis=ax)
    return W


def _time_support(f: np.ndarray) -> float:
    nz = np.nonzero(np.any(f.reshape(f.shape[0], -1) != 0, axis=1))[0]
    return 0 if nz.size == 0 else int(nz[-1] - nz[0] + 1)


def _resolve_cutoffs(f: np.ndarray, grid: SpaceTimeGrid, spec: KernelSpec, cutoffs: Cutoffs | None):
    cutoffs = cutoffs or Cutoffs()
    if cutoffs.time_horizon is not None:
        horizon = cutoffs.time_horizon
    else:
        horizon = 4 * max(_time_support(f), 1) * grid.dt
    n_lag = int(min(grid.nt, max(1, math.ceil(horizon / grid.dt - 1e-9))))
    if cutoffs.truncation_radius is not None:
        radius = cutoffs.truncation_radius
    else:
        radius = math.sqrt(spec.k * n_lag * grid.dt * math.log(1e10))
    n_off = int(min(grid.nx, math.floor(radius / grid.dx) + 1))
    return n_lag, n_off, n_lag * grid.dt, radius


def _tail_bound(spec, grid, n_lag, n_off, fmax) -> float:
    if n_lag == grid.nt and n_off == grid.nx:
        return 0.0
    full = kernel_weights(spec, grid.d, grid.dt, grid.dx, grid.nt, grid.nx)
    full_mass = _mirror(full, grid.d).sum()
    kept = _mirror(full[(slice(0, n_lag),) + (slice(0, n_off),) * grid.d], grid.d).sum()
    return float(fmax * max(full_mass - kept, 0.0))


def _apply_fft(W: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``out[i, x] = sum_{l, o} W[l, o] f[i + l, x + o]`` with zero extension."""
    d = f.ndim - 1
    nt, nx = f.shape[0], f.shape[1]
    Wf = _mirror(W, d)[::-1]
    L = W.shape[0]
    K = W.shape[1] - 1
    shape = [fft.next_fast_len(nt + L - 1, real=True)] + [fft.next_fast_len(nx + 2 * K, real=True)] * d
    out = fft.irfftn(fft.rfftn(f, shape) * fft.rfftn(Wf, shape), shape)
    sl = (slice(L - 1, L - 1 + nt),) + (slice(K, K + nx),) * d
    return out[sl]


def _apply_direct(W: np.ndarray, f: np.ndarray, rel_floor: float = 1e-12) -> np.ndarray:
    """Direct summation over kernel support (entries below ``rel_floor * max`` dropped)."""
    d = f.ndim - 1
    nt, nx = f.shape[0], f.shape[1]
    Wf = _mirror(W, d)
    K = W.shape[1] - 1
    thresh = rel_floor * Wf.max()
    pad = np.pad(f, [(0, W.shape[0])] + [(K, K)] * d)
    out = np.zeros_like(f)
    for lag in range(W.shape[0]):
        for idx in zip(*np.nonzero(Wf[lag] > thresh)):
            sl = (slice(lag, lag + nt),) + tuple(slice(i, i + nx) for i in idx)
            out += Wf[(lag,) + idx] * pad[sl]
    return out


def apply_potential(spec: KernelSpec, f: GridField, cutoffs: Cutoffs | None = None,
                    path: str = "fft") -> PotentialResult:
    """``P_{alpha,k} f`` on the grid of ``f`` (field zero-extended outside the box)."""
    grid = f.grid
    if spec.alpha >= grid.d + 2:
        warnings.warn("alpha >= d + 2: the kernel is not locally integrable in time", RuntimeWarning, stacklevel=2)
    vals = f.values
    comps = [vals[..., c] for c in range(f.components)]
    n_lag, n_off, horizon, radius = _resolve_cutoffs(np.abs(vals).sum(-1), grid, spec, cutoffs)
    W = kernel_weights(spec, grid.d, grid.dt, grid.dx, n_lag, n_off)
    apply = {"fft": _apply_fft, "direct": _apply_direct}[path]
    out = np.stack([apply(W, c) if c.any() else np.zeros_like(c) for c in comps], -1)
    if path == "fft":
        # transform round-off must not break positivity
        nonneg = np.stack([c.min() >= 0 for c in comps])
        out = np.where(nonneg, np.maximum(out, 0.0), out)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite potential: kernel too singular for this grid, refine dt/dx")
    tail = _tail_bound(spec, grid, n_lag, n_off, float(np.abs(vals).max()) if vals.size else 0.0)
    return PotentialResult(GridField(grid, out, f.components), radius, horizon, tail, path)


def potential(spec: KernelSpec, f: GridField, **kw) -> np.ndarray:
    """Scalar convenience wrapper returning the raw array."""
    return apply_potential(spec, f, **kw).field.values[..., 0]


# finite differences ---------------------------------------------------------------

def central_diff(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centred first difference with zero extension."""
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 1)
    ap = np.pad(a, pad)
    n = a.shape[axis]
    hi = np.take(ap, np.arange(2, n + 2), axis=axis)
    lo = np.take(ap, np.arange(0, n), axis=axis)
    return (hi - lo) / (2 * h)


def laplacian(a: np.ndarray, h: float, axes) -> np.ndarray:
    out = np.zeros_like(a)
    for ax in axes:
        pad = [(0, 0)] * a.ndim
        pad[ax] = (1, 1)
        ap = np.pad(a, pad)
        n = a.shape[ax]
        out += (np.take(ap, np.arange(2, n + 2), axis=ax) + np.take(ap, np.arange(0, n), axis=ax) - 2 * a) / h**2
    return out


def heat_operator(u: GridField) -> GridField:
    """``u_t + Laplace u`` by centred differences."""
    g = u.grid
    a = u.scalar
    out = central_diff(a, g.dt, 0) + laplacian(a, g.dx, range(1, g.d + 1))
    return GridField(g, out[..., None], 1)


@dataclass
class IdentityCheck:
    c_est: float
    residual: float
    c_reference: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def c_rel_error(self) -> float:
        if self.c_reference is None:
            return float("nan")
        return abs(self.c_est / self.c_reference - 1)

    def as_dict(self) -> dict:
        return {"c_est": self.c_est, "residual": self.residual, "c_reference": self.c_reference,
                "c_rel_error": self.c_rel_error, **self.extra}


def _least_squares(target: np.ndarray, basis: np.ndarray, degenerate_tol: float = 1e-300):
    bb = float(np.sum(basis * basis))
    if bb <= degenerate_tol:
        raise ValueError("degenerate: potential vanishes")
    c = float(np.sum(target * basis)) / bb
    resid = float(np.linalg.norm(target - c * basis) / np.linalg.norm(target))
    return c, resid


def heat_representation_residual(u: GridField, cutoffs: Cutoffs | None = None) -> IdentityCheck:
    """Fit ``u = c P_{2,4}(u_t + Laplace u)`` by least squares; reference ``c = -(4 pi)**(-d/2)``."""
    ref = heat_constant(u.grid.d)
    if not u.values.any():
        return IdentityCheck(0.0, 0.0, ref, {"trivial": True})
    if cutoffs is None:
        cutoffs = Cutoffs(time_horizon=u.grid.nt * u.grid.dt)
    Pg = potential(KernelSpec(2.0, 4.0), heat_operator(u), cutoffs=cutoffs)
    c, res = _least_squares(u.scalar, Pg)
    return IdentityCheck(c, res, ref)


def semigroup_residual(alpha: float, beta: float, k: float, f: GridField,
                       cutoffs: Cutoffs | None = None) -> IdentityCheck:
    """Fit ``P_alpha P_beta f = c P_{alpha+beta} f``; reference is the closed-form constant."""
    g = f.grid
    ref = semigroup_constant(alpha, beta, k, g.d)
    if alpha + beta >= g.d + 2:
        raise ValueError("need alpha + beta < d + 2")
    if not f.values.any():
        return IdentityCheck(0.0, 0.0, ref, {"trivial": True})
    if cutoffs is None:
        cutoffs = Cutoffs(time_horizon=g.nt * g.dt)
    inner = apply_potential(KernelSpec(beta, k), f, cutoffs).field
    lhs = potential(KernelSpec(alpha, k), inner, cutoffs=cutoffs)
    rhs = potential(KernelSpec(alpha + beta, k), f, cutoffs=cutoffs)
    c, _ = _least_squares(lhs, rhs)
    res = float(np.linalg.norm(lhs - c * rhs) / np.linalg.norm(lhs))
    return IdentityCheck(c, res, ref)


def derivative_norm(a: np.ndarray, n: int, h: float, d: int) -> np.ndarray:
    """Frobenius norm of all n-th order spatial partials (centred differences)."""
    terms = [a]
    for _ in range(n):
        terms = [central_diff(t, h, ax) for t in terms for ax in range(1, d + 1)]
    return np.sqrt(sum(t**2 for t in terms))


@dataclass
class DominationReport:
    N_est: float
    N_est_alt: float
    excluded: int
    total: int
    all_excluded: bool = False
    per_field: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def derivative_domination_report(n: int, alpha: float, k: float, fields, eps_den: float = 1e-3,
                                 kappa: float | None = None) -> DominationReport:
    """Max of ``|D^n P_{alpha,k} f| / P_{alpha-n, 2k}|f|`` over the family.

    ``N_est_alt`` uses the alternative reading ``P_{alpha-n, 2 kappa}`` of the
    dominating operator.  Points with denominator below ``eps_den`` times its
    maximum, and points within ``n`` cells of the spatial boundary (where the
    difference stencil would read the zero extension), are excluded and counted.
    """
    if not alpha > n:
        raise ValueError("need alpha > n")
    fields = list(fields)
    g = fields[0].grid
    if kappa is None:
        kappa = math.floor((g.d + 2) / 2) + 1
    best = best_alt = 0.0
    excluded = total = 0
    per = []
    for f in fields:
        total += f.values[..., 0].size
        if not f.values.any():
            excluded += f.values[..., 0].size
            per.append(0.0)
            continue
        cut = Cutoffs(time_horizon=g.nt * g.dt)
        num = derivative_norm(potential(KernelSpec(alpha, k), f, cutoffs=cut), n, g.dx, g.d)
        absf = GridField(g, np.abs(f.values), f.components)
        ratios = []
        # the n-th difference stencil reads n cells on each side; drop points where it leaves the box
        inside = np.zeros(num.shape, bool)
        inside[(slice(None),) + (slice(n, g.nx - n),) * g.d] = True
        for kk in (2 * k, 2 * kappa):
            den = potential(KernelSpec(alpha - n, kk), absf, cutoffs=cut)
            keep = inside & (den > eps_den * den.max())
            ratios.append((float((num[keep] / den[keep]).max()) if keep.any() else 0.0, keep))
        (r1, keep), (r2, _) = ratios
        excluded += int((~keep).sum())
        per.append(r1)
        best, best_alt = max(best, r1), max(best_alt, r2)
    if excluded == total:
        if all(not f.values.any() for f in fields):
            return DominationReport(0.0, 0.0, excluded, total, True, per)
        raise ValueError("all points excluded")
    return DominationReport(best, best_alt, excluded, total, False, per)
