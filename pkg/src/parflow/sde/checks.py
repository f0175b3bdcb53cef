"""Monte Carlo checks on the flow: bump derivatives, chain rule, generator PDE and moment bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.linalg import expm

from ..grid import SpaceTimeGrid, cell_lp_average
from ..pde_energy import minimal_N
from .coefficients import SdeCoefficients
from .flow import euler_maruyama
from .polynomials import DirectionalPolynomial, ball_points, sup_points
from ..grid import ball_volume

Z95 = 1.959963984540054


# bump derivative ---------------------------------------------------------------------

def jacobian_vs_bump(coeffs: SdeCoefficients, t: float, x, eta, T: float, h: float, M: int, eps: float,
                     seed: int = 0) -> float:
    """``max_s`` of the path mean of ``|eta_s - (x_s(x + eps eta) - x_s(x)) / eps| / (1 + |eta_s|)``."""
    d = coeffs.d
    x = np.asarray(x, float).reshape(d)
    eta = np.asarray(eta, float).reshape(d)
    x0 = np.stack([x, x + eps * eta])
    e0 = np.stack([eta, np.zeros(d)])[..., None]
    n = int(round(T / h))
    res = euler_maruyama(coeffs, t, x0, e0, T, h, M, seed, record_every=1)
    worst = 0.0
    for _, X, E in res.records[1:] if n else []:
        keep = ~res.excluded
        dev = np.sqrt(((E[keep, 0, :, 0] - (X[keep, 1] - X[keep, 0]) / eps) ** 2).sum(-1))
        nrm = np.sqrt((E[keep, 0, :, 0] ** 2).sum(-1))
        worst = max(worst, float(np.mean(dev / (1 + nrm))))
    return worst


def bump_slope(coeffs, t, x, eta, T, h, M, eps_list=(1e-2, 1e-3, 1e-4), seed: int = 0) -> dict:
    devs = [jacobian_vs_bump(coeffs, t, x, eta, T, h, M, e, seed) for e in eps_list]
    slopes = [math.log(devs[i] / devs[i + 1]) / math.log(eps_list[i] / eps_list[i + 1])
              if devs[i + 1] > 0 and devs[i] > 0 else float("nan") for i in range(len(devs) - 1)]
    return {"eps": list(eps_list), "deviation": devs, "slopes": slopes}


# chain rule --------------------------------------------------------------------------

@dataclass
class ChainRuleResult:
    lhs: float
    rhs: float
    residual: float
    half_width: float
    raw_half_width: float
    M: int
    inconclusive: bool
    excluded: int = 0

    @property
    def within(self) -> bool:
        return self.residual <= 3 * self.half_width

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["within_3_half_widths"] = self.within
        return out


def chain_rule_residual(coeffs: SdeCoefficients, f, t: float, x, eta, s: float, M: int, h: float,
                        grad_f=None, eps_x: float = 1e-4, seed: int = 0, floor: float = 1e-12,
                        max_half_width: float = 0.05, batch: int = 20000) -> ChainRuleResult:
    """Compare ``E grad f(x_s) . eta_s`` with the centred ``eta``-difference of ``E f(x_s)``.

    Both sides use the same paths.  The half-width is the 95% interval of the
    difference of two independent means (conservative for shared noise),
    scaled like the residual.
    """
    d = coeffs.d
    x = np.asarray(x, float).reshape(d)
    eta = np.asarray(eta, float).reshape(d)
    x0 = np.stack([x, x + eps_x * eta, x - eps_x * eta])
    e0 = np.stack([eta, eta, eta])[..., None]
    sums = np.zeros(2)
    sq = np.zeros(2)
    n_ok = 0
    excluded = 0
    for start in range(0, M, batch):
        m = min(batch, M - start)
        res = euler_maruyama(coeffs, t, x0, e0, s, h, m, seed, path_offset=start)
        keep = ~res.excluded
        excluded += int((~keep).sum())
        X, E = res.x[keep], res.eta[keep]
        if grad_f is None:
            g = np.stack([(f(X[:, 0] + eps_x * e) - f(X[:, 0] - eps_x * e)) / (2 * eps_x) for e in np.eye(d)], -1)
        else:
            g = grad_f(X[:, 0])
        lhs_i = np.sum(g * E[:, 0, :, 0], -1)
        rhs_i = (f(X[:, 1]) - f(X[:, 2])) / (2 * eps_x)
        vals = np.stack([lhs_i, rhs_i], -1)
        sums += vals.sum(0)
        sq += (vals**2).sum(0)
        n_ok += len(vals)
    mean = sums / n_ok
    var = np.maximum(sq / n_ok - mean**2, 0.0) * n_ok / max(n_ok - 1, 1)
    lhs, rhs = mean
    denom = abs(lhs) + abs(rhs) + floor
    raw_hw = Z95 * math.sqrt(var[0] / n_ok + var[1] / n_ok)
    hw = raw_hw / denom
    return ChainRuleResult(float(lhs), float(rhs), float(abs(lhs - rhs) / denom), float(hw), float(raw_hw),
                           n_ok, bool(hw > max_half_width), excluded)


def em_linear_moments(A, x, s: float, h: float, sigma: float = 1.0):
    """Mean, covariance and Jacobian of the Euler-Maruyama chain for ``b = A x``, ``sigma`` scalar."""
    A = np.asarray(A, float)
    d = A.shape[0]
    n = int(round(s / h))
    B = np.eye(d) + h * A
    m = np.asarray(x, float).copy()
    cov = np.zeros((d, d))
    J = np.eye(d)
    for _ in range(n):
        m = B @ m
        cov = B @ cov @ B.T + h * sigma**2 * np.eye(d)
        J = B @ J
    return m, cov, J


def quadratic_chain_oracle(A, Q, g, x, eta, s: float, h: float) -> float:
    """Exact value of both sides for ``f = x^T Q x / 2 + g . x`` under the scheme."""
    m, _, J = em_linear_moments(A, x, s, h)
    return float((np.asarray(Q) @ m + np.asarray(g)) @ (J @ np.asarray(eta, float)))


# generator PDE -----------------------------------------------------------------------

@dataclass
class GeneratorReport:
    points: list
    residual: np.ndarray
    noise: np.ndarray
    flagged: np.ndarray
    terms: np.ndarray = field(repr=False, default=None)

    @property
    def max(self) -> float:
        ok = ~self.flagged
        return float(self.residual[ok].max()) if ok.any() else float("nan")

    @property
    def median(self) -> float:
        ok = ~self.flagged
        return float(np.median(self.residual[ok])) if ok.any() else float("nan")

    def as_dict(self) -> dict:
        return {"max": self.max, "median": self.median, "n_points": len(self.points),
                "n_flagged": int(self.flagged.sum()), "residual": self.residual.tolist()}


def _u_table(coeffs, f: DirectionalPolynomial, t: float, xs: np.ndarray, etas: np.ndarray, T: float, h: float,
             M: int, seed: int, n_batches: int):
    """Batch means of ``f(x_{T-t}(t, x), eta_{T-t})`` for all ``x`` in ``xs`` and ``eta`` in ``etas``."""
    d = coeffs.d
    out = np.zeros((n_batches, len(xs), len(etas)))
    if T - t <= 1e-12:
        vals = f(xs[:, None, :], etas[None, :, :])
        out[:] = vals
        return out
    step_offset = int(round(t / h))
    per = M // n_batches
    e0 = np.broadcast_to(np.eye(d), (len(xs), d, d))
    for k in range(n_batches):
        res = euler_maruyama(coeffs, t, xs, e0, T - t, h, per, seed, path_offset=k * per, step_offset=step_offset)
        keep = ~res.excluded
        X, J = res.x[keep], res.eta[keep]
        et = np.einsum("mpij,qj->mpqi", J, etas)
        out[k] = f(X[:, :, None, :], et).mean(0)
    return out


def generator_residual(coeffs: SdeCoefficients, f: DirectionalPolynomial, T: float, t_values, x_points, eta_points,
                       M: int, h: float, hx: float = 0.1, he: float = 0.1, ht_steps: int = 5, seed: int = 0,
                       n_batches: int = 8, noise_tol: float = 0.05) -> GeneratorReport:
    """Pointwise residual of the backward equation for ``u(t, x, eta) = E f(x_{T-t}, eta_{T-t})``.

    Derivatives are centred differences (steps ``hx``, ``he``, ``ht_steps * h``)
    over common random numbers; when ``t < ht`` the time derivative uses the
    second-order forward stencil instead.  The residual at a point is the absolute sum
    of the six terms divided by the largest term; points whose batch standard
    error exceeds ``noise_tol`` of that scale are flagged.
    """
    d = coeffs.d
    ht = ht_steps * h
    E = np.eye(d)
    points, res, noise, flags, allterms = [], [], [], [], []
    for t in t_values:
        one_sided = t - ht < -1e-12
        if t + (2 if one_sided else 1) * ht > T + 1e-12:
            raise ValueError("time stencil leaves [t, T]")
        for x in np.atleast_2d(np.asarray(x_points, float)):
            xs = [x] + [x + s * hx * E[i] for i in range(d) for s in (1, -1)]
            pair_idx = {}
            for i in range(d):
                for j in range(i + 1, d):
                    for si in (1, -1):
                        for sj in (1, -1):
                            pair_idx[(i, j, si, sj)] = len(xs)
                            xs.append(x + si * hx * E[i] + sj * hx * E[j])
            xs = np.array(xs)
            for eta in np.atleast_2d(np.asarray(eta_points, float)):
                es = [eta] + [eta + s * he * E[i] for i in range(d) for s in (1, -1)]
                epair = {}
                for i in range(d):
                    for j in range(i + 1, d):
                        for si in (1, -1):
                            for sj in (1, -1):
                                epair[(i, j, si, sj)] = len(es)
                                es.append(eta + si * he * E[i] + sj * he * E[j])
                es = np.array(es)
                U = _u_table(coeffs, f, t, xs, es, T, h, M, seed, n_batches)  # (K, X, E)
                Ut_p = _u_table(coeffs, f, t + ht, xs[:1], es[:1], T, h, M, seed, n_batches)[:, 0, 0]
                # near t = 0 a second-order forward stencil replaces the central one
                t_other = t + 2 * ht if one_sided else t - ht
                Ut_o = _u_table(coeffs, f, t_other, xs[:1], es[:1], T, h, M, seed, n_batches)[:, 0, 0]
                terms = _generator_terms(coeffs, t, x, eta, U, Ut_p, Ut_o, ht, hx, he, pair_idx, epair, d,
                                         one_sided)
                per_batch = terms.sum(-1)
                scale = np.abs(terms.mean(0)).max()
                r = abs(per_batch.mean()) / scale if scale > 0 else 0.0
                se = per_batch.std(ddof=1) / math.sqrt(len(per_batch)) / scale if scale > 0 else 0.0
                points.append((float(t), tuple(map(float, x)), tuple(map(float, eta))))
                res.append(r)
                noise.append(se)
                flags.append(se > noise_tol)
                allterms.append(terms.mean(0))
    return GeneratorReport(points, np.array(res), np.array(noise), np.array(flags), np.array(allterms))


def _generator_terms(coeffs, t, x, eta, U, Ut_p, Ut_o, ht, hx, he, pair_idx, epair, d, one_sided=False):
    """Per-batch values of the six terms; ``U[:, ix, ie]`` indexes the x / eta stencils."""
    K = U.shape[0]
    u0 = U[:, 0, 0]
    if one_sided:
        ut = (-3 * u0 + 4 * Ut_p - Ut_o) / (2 * ht)
    else:
        ut = (Ut_p - Ut_o) / (2 * ht)
    xi = lambda i, s: 1 + 2 * i + (0 if s > 0 else 1)
    ux = np.stack([(U[:, xi(i, 1), 0] - U[:, xi(i, -1), 0]) / (2 * hx) for i in range(d)], -1)
    ue = np.stack([(U[:, 0, xi(i, 1)] - U[:, 0, xi(i, -1)]) / (2 * he) for i in range(d)], -1)
    uxx = np.zeros((K, d, d))
    uee = np.zeros((K, d, d))
    uxe = np.zeros((K, d, d))
    for i in range(d):
        uxx[:, i, i] = (U[:, xi(i, 1), 0] - 2 * u0 + U[:, xi(i, -1), 0]) / hx**2
        uee[:, i, i] = (U[:, 0, xi(i, 1)] - 2 * u0 + U[:, 0, xi(i, -1)]) / he**2
        for j in range(i + 1, d):
            v = sum(si * sj * U[:, pair_idx[(i, j, si, sj)], 0] for si in (1, -1) for sj in (1, -1)) / (4 * hx**2)
            w = sum(si * sj * U[:, 0, epair[(i, j, si, sj)]] for si in (1, -1) for sj in (1, -1)) / (4 * he**2)
            uxx[:, i, j] = uxx[:, j, i] = v
            uee[:, i, j] = uee[:, j, i] = w
        for j in range(d):
            uxe[:, i, j] = sum(si * sj * U[:, xi(i, si), xi(j, sj)] for si in (1, -1) for sj in (1, -1)) / (4 * hx * he)
    xx = np.asarray(x, float)[None]
    sig = coeffs.sigma(t, xx)[0]
    dsig = coeffs.grad_sigma(t, xx)[0]
    sig_eta = np.einsum("ikl,l->ik", dsig, eta)
    b = coeffs.b(t, xx)[0]
    b_eta = coeffs.grad_b(t, xx)[0] @ eta
    a = sig @ sig.T
    t1 = ut
    t2 = 0.5 * np.einsum("ij,kij->k", a, uxx)
    t3 = np.einsum("ij,kij->k", sig @ sig_eta.T, uxe)
    t4 = 0.5 * np.einsum("ij,kij->k", sig_eta @ sig_eta.T, uee)
    t5 = ux @ b
    t6 = ue @ b_eta
    return np.stack([t1, t2, t3, t4, t5, t6], -1)


# weighted sup over directions ------------------------------------------------------

def _start_grid(box: float, nx: int, d: int) -> SpaceTimeGrid:
    dx = 2 * box / nx
    return SpaceTimeGrid(0.0, (-box,) * d, dx**2, dx, 1, nx, d)


def exp_weight_cells(grid: SpaceTimeGrid, lam: float) -> np.ndarray:
    """Cell averages of ``e^{-lam |x|}`` (adaptive cubature; exact integral up to tolerance)."""
    if lam == 0:
        return np.ones(grid.spatial_shape)
    pts = grid.space_points().reshape(-1, grid.d)
    fn = lambda y: np.exp(-lam * np.sqrt((y**2).sum(-1)))
    return cell_lp_average(fn, pts, grid.dx, 1.0, tol=1e-6).reshape(grid.spatial_shape)


def _flow_on_grid(coeffs, grid: SpaceTimeGrid, T: float, h: float, M: int, seed: int, batch: int,
                  consume, t0: float = 0.0):
    """Run batches of paths from every cell centre (shared noise across centres) and feed ``consume``."""
    d = coeffs.d
    xs = grid.space_points().reshape(-1, d)
    e0 = np.broadcast_to(np.eye(d), (len(xs), d, d))
    excluded = 0
    for start in range(0, M, batch):
        m = min(batch, M - start)
        res = euler_maruyama(coeffs, t0, xs, e0, T, h, m, seed, path_offset=start, track_sup=False)
        keep = ~res.excluded
        excluded += int((~keep).sum())
        consume(res.x[keep], res.eta[keep])
    return excluded


def weighted_sup_eta_report(coeffs: SdeCoefficients, f: DirectionalPolynomial, n: int, lam: float, rho0: float,
                            T: float, box: float, nx: int, M: int, h: float, seed: int = 0, n_sup: int = 64,
                            n_ball: int = 2**8, batch: int | None = None) -> dict:
    """Both sides of the weighted sup-over-directions bound and the minimal constant.

    ``sup_{|eta| <= 1}`` uses a fixed set of ``n_sup`` points; the ball-integral
    variant averages ``|u|^{2n}`` over quasi-uniform ball points instead.
    """
    d = coeffs.d
    grid = _start_grid(box, nx, d)
    P = nx**d
    sp = sup_points(d, n_sup)
    bp = ball_points(d, n_ball)
    etas = np.concatenate([sp, bp])
    acc = np.zeros((P, len(etas)))
    count = [0]
    batch = batch or max(1, min(M, 200_000 // P))
    chunk = max(1, 2_000_000 // (P * len(etas)))

    def consume(X, J):
        for k in range(0, len(X), chunk):
            et = np.einsum("mpij,qj->mpqi", J[k:k + chunk], etas)
            acc[:] += f(X[k:k + chunk, :, None, :], et).sum(0)
        count[0] += len(X)

    excluded = _flow_on_grid(coeffs, grid, T, h, M, seed, batch, consume)
    u0 = acc / max(count[0], 1)
    w = exp_weight_cells(grid, lam).ravel()
    vol = grid.spatial_cell_volume
    xs = grid.space_points().reshape(-1, d)
    fvals = f(xs[:, None, :], etas[None])
    ns = len(sp)
    sup_u = np.abs(u0[:, :ns]).max(1) ** (2 * n)
    sup_f = np.abs(fvals[:, :ns]).max(1) ** (2 * n)
    lhs = float(np.sum(sup_u * w) * vol)
    base = float(np.sum(sup_f * w) * vol)
    ball_u = float(np.sum(ball_volume(d) * (np.abs(u0[:, ns:]) ** (2 * n)).mean(1) * w) * vol)
    ball_f = float(np.sum(ball_volume(d) * (np.abs(fvals[:, ns:]) ** (2 * n)).mean(1) * w) * vol)
    ratio = lhs / base if base else 0.0
    lam0_lhs = float(np.sum(sup_u) * vol)
    lam0_base = float(np.sum(sup_f) * vol)
    return {"lhs": lhs, "rhs_integral": base, "ratio": ratio,
            "N_min": minimal_N(ratio, lam, rho0, T) if base else 0.0,
            "ball_lhs": ball_u, "ball_rhs": ball_f, "ball_ratio": ball_u / ball_f if ball_f else 0.0,
            "lambda0_ratio": lam0_lhs / lam0_base if lam0_base else 0.0,
            "excluded": excluded, "n": n, "lam": lam, "rho0": rho0, "T": T, "M": M, "h": h}


# weighted Jacobian moment ----------------------------------------------------------

def matrix_norm(J: np.ndarray, kind: str = "frobenius") -> np.ndarray:
    if kind == "frobenius":
        return np.sqrt((J**2).sum((-1, -2)))
    if kind == "operator":
        return np.linalg.norm(J, ord=2, axis=(-2, -1))
    raise ValueError(f"unknown matrix norm {kind!r}")


def derivative_weighted_moment(coeffs: SdeCoefficients, kappa: int, s: float, box: float, nx: int, M: int,
                               h: float, seed: int = 0, t: float = 0.0, norm: str = "frobenius",
                               batch: int | None = None, max_excluded: float = 1e-3) -> dict:
    """``E int e^{-|x|} |Dx_s(t, x)|^{2 kappa} dx`` on a centred box with a 95% interval."""
    d = coeffs.d
    if not kappa > (d + 2) / 2:
        raise ValueError("need kappa > (d + 2) / 2")
    grid = _start_grid(box, nx, d)
    P = nx**d
    w = exp_weight_cells(grid, 1.0).ravel() * grid.spatial_cell_volume
    per_path = []
    batch = batch or max(1, min(M, 400_000 // P))

    def consume(X, J):
        per_path.append(matrix_norm(J, norm) ** (2 * kappa) @ w)

    excluded = _flow_on_grid(coeffs, grid, s, h, M, seed, batch, consume, t0=t)
    if excluded / M > max_excluded:
        raise RuntimeError(f"run rejected: excluded path fraction {excluded / M:.2e} > {max_excluded:g}")
    v = np.concatenate(per_path)
    mean = float(v.mean())
    hw = float(Z95 * v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return {"value": mean, "half_width": hw, "excluded": excluded, "kappa": kappa, "norm": norm,
            "weight_integral": float(w.sum()), "M": M, "h": h}


def identity_jacobian_value(d: int, kappa: int) -> float:
    """``d^kappa int_{R^d} e^{-|x|} dx``."""
    return d**kappa * 2 * math.pi ** (d / 2) / math.gamma(d / 2) * math.gamma(d)


def linear_jacobian_value(A, s: float, h: float, kappa: int, box: float, nx: int, norm: str = "frobenius") -> float:
    """Deterministic Jacobian of the scheme for ``b = A x`` times the weight integral."""
    d = np.asarray(A).shape[0]
    _, _, J = em_linear_moments(A, np.zeros(d), s, h)
    g = _start_grid(box, nx, d)
    w = exp_weight_cells(g, 1.0).sum() * g.spatial_cell_volume
    return float(matrix_norm(J, norm) ** (2 * kappa) * w)


# sup moments -------------------------------------------------------------------------

def moment_sup_report(coeffs: SdeCoefficients, q: float, T: float, h: float, M: int, x=None,
                      eta_ladder=(0.5, 1.0, 2.0, 4.0, 8.0), n_deriv: int = 0, eps: float = 1e-4,
                      seed: int = 0, t: float = 0.0) -> dict:
    """``E sup_{s <= T}`` moments of ``x_s - x`` and ``eta_s`` with a fitted degree ``m``.

    ``n_deriv = 1`` replaces the processes by bump differences
    ``(x_s(x + eps e_1) - x_s(x)) / eps`` (and likewise in ``eta``).
    """
    d = coeffs.d
    x = np.zeros(d) if x is None else np.asarray(x, float)
    ladder = np.asarray(eta_ladder, float)
    e1 = np.eye(d)[0]
    x0 = np.stack([x, x + eps * e1])
    E0 = np.stack([np.outer(e1, ladder), np.outer(e1, ladder)])
    res = euler_maruyama(coeffs, t, x0, E0, T, h, M, seed, record_every=1 if n_deriv else None)
    keep = ~res.excluded
    if n_deriv == 0:
        sup_x = res.sup_dx[keep, 0]
        sup_e = res.sup_eta[keep, 0]
    elif n_deriv == 1:
        sup_x = np.zeros(keep.sum())
        sup_e = np.zeros((keep.sum(), len(ladder)))
        for _, X, Ex in res.records:
            dx = np.sqrt((((X[keep, 1] - X[keep, 0]) / eps) ** 2).sum(-1))
            de = np.sqrt((((Ex[keep, 1] - Ex[keep, 0]) / eps) ** 2).sum(-2))
            np.maximum(sup_x, dx, out=sup_x)
            np.maximum(sup_e, de, out=sup_e)
    else:
        raise ValueError("n_deriv must be 0 or 1")
    mx = float(np.mean(sup_x**q))
    me = np.mean(sup_e**q, 0)
    big = ladder >= 1
    if big.sum() >= 2 and np.all(me[big] > 0):
        m_fit = float(np.polyfit(np.log(ladder[big]), np.log(me[big]), 1)[0])
    else:
        m_fit = float("nan")
    N_fit = float(np.max(np.maximum(mx, me) / (1 + ladder ** (m_fit if np.isfinite(m_fit) else q))))
    out = {"q": q, "T": T, "h": h, "M": int(keep.sum()), "sup_moment_x": mx, "sup_moment_eta": me.tolist(),
           "eta_ladder": ladder.tolist(), "m_fit": m_fit, "N_fit": N_fit}
    if coeffs.constant_sigma and n_deriv == 0:
        a = coeffs.sigma(t, x[None])[0] @ coeffs.sigma(t, x[None])[0].T
        out["doob_bound"] = 4 * float(np.trace(a)) * T if q == 2 else None
        # reflection: sup_s (w^1_s) has the law of |w^1_T|
        out["reflection_moment"] = float((a[0, 0] * T) ** (q / 2) * 2 ** (q / 2) * special.gamma((q + 1) / 2)
                                         / math.sqrt(math.pi))
        out["max_x1_moment"] = float(np.mean(np.maximum(res.max_x1[keep, 0], 0.0) ** q))
    return out


def linear_flow_jacobian(A, s: float) -> np.ndarray:
    return expm(s * np.asarray(A, float))
