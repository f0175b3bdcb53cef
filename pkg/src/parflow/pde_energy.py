"""Backward divergence-form parabolic solver and weighted energy reports.

The spatial operator

    L u = 1/2 D_i (a^{ij} D_j u + afrak^i u) + b^i D_i u

is discretised by finite volumes on the cell-centred box with zero Dirichlet
ghosts.  ``G`` is the forward difference from cells to faces and the
divergence is ``-G^T``, so the discrete integration by parts identity holds
exactly for any face flux.  Off-diagonal ``a^{ij}`` use the centred ``j``
gradient averaged onto ``i`` faces; ``b . Du`` is upwinded.  Time stepping
is implicit Euler backwards from the terminal time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, sparse, special
from scipy.sparse import linalg as spla

from .grid import ExponentialWeight, GridField, SpaceTimeGrid, time_window_weights

ADMISSIBLE_N = (1, 4, 6, 8, 10, 12)


def admissible_n(n: int, allow_any: bool = False) -> bool:
    """``n`` in ``{1, 4, 6, 8, ...}`` (``i`` for ``i = 1``, ``2i`` for ``i >= 2``)."""
    if allow_any:
        return n >= 1
    return n == 1 or (n >= 4 and n % 2 == 0)


# sparse building blocks ------------------------------------------------------------

def _kron_axis(op1d, axis: int, nx: int, d: int):
    mats = [sparse.identity(nx, format="csr")] * d
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sparse.kron(out, m, format="csr")
    return out


def _grad_1d(nx: int, h: float):
    """Cells -> faces (nx + 1 faces, ghosts are zero)."""
    return sparse.diags([-np.ones(nx), np.ones(nx)], [-1, 0], shape=(nx + 1, nx), format="csr") / h


def _avg_1d(nx: int):
    """Cells -> faces average with zero ghosts."""
    return sparse.diags([0.5 * np.ones(nx), 0.5 * np.ones(nx)], [-1, 0], shape=(nx + 1, nx), format="csr")


def _face_to_cell_1d(nx: int):
    return sparse.diags([0.5 * np.ones(nx), 0.5 * np.ones(nx)], [0, 1], shape=(nx, nx + 1), format="csr")


def _face_avg_coeff(c: np.ndarray, axis: int) -> np.ndarray:
    """Cell coefficient -> face values (arithmetic mean, one-sided at the box edge)."""
    pad = [(0, 0)] * c.ndim
    pad[axis] = (1, 1)
    cp = np.pad(c, pad, mode="edge")
    n = c.shape[axis]
    lo = np.take(cp, np.arange(0, n + 1), axis=axis)
    hi = np.take(cp, np.arange(1, n + 2), axis=axis)
    return 0.5 * (lo + hi)


@dataclass
class Operators:
    """Face operators for one grid (one block per axis)."""
    G: list
    Avg: list
    F2C: list
    nx: int
    d: int
    dx: float

    @classmethod
    def build(cls, nx: int, d: int, dx: float) -> "Operators":
        G, A, F = [], [], []
        for ax in range(d):
            G.append(_kron_axis(_grad_1d(nx, dx), ax, nx, d))
            A.append(_kron_axis(_avg_1d(nx), ax, nx, d))
            F.append(_kron_axis(_face_to_cell_1d(nx), ax, nx, d))
        return cls(G, A, F, nx, d, dx)


def divergence_operator(ops: Operators, a: np.ndarray, afrak: np.ndarray | None = None):
    """Sparse matrix of ``D_i(a^{ij} D_j u + afrak^i u)`` (no factor 1/2).

    ``a`` has shape ``spatial + (d, d)``, ``afrak`` shape ``spatial + (d,)``.
    """
    d = ops.d
    n = ops.nx**d
    M = sparse.csr_matrix((n, n))
    for i in range(d):
        flux = sparse.diags(_face_avg_coeff(a[..., i, i], i).ravel()) @ ops.G[i]
        for j in range(d):
            if j == i:
                continue
            cross = ops.Avg[i] @ ops.F2C[j] @ ops.G[j]
            flux = flux + sparse.diags(_face_avg_coeff(a[..., i, j], i).ravel()) @ cross
        if afrak is not None:
            flux = flux + sparse.diags(_face_avg_coeff(afrak[..., i], i).ravel()) @ ops.Avg[i]
        M = M - ops.G[i].T @ flux
    return M.tocsr()


def upwind_operator(ops: Operators, b: np.ndarray):
    """``b^i D_i u`` with one-sided differences following the sign of ``b``."""
    d, nx, h = ops.d, ops.nx, ops.dx
    fwd = sparse.diags([-np.ones(nx), np.ones(nx - 1)], [0, 1], shape=(nx, nx), format="csr") / h
    bwd = sparse.diags([np.ones(nx), -np.ones(nx - 1)], [0, -1], shape=(nx, nx), format="csr") / h
    n = nx**d
    M = sparse.csr_matrix((n, n))
    for i in range(d):
        bi = b[..., i].ravel()
        M = M + sparse.diags(np.maximum(bi, 0)) @ _kron_axis(fwd, i, nx, d)
        M = M + sparse.diags(np.minimum(bi, 0)) @ _kron_axis(bwd, i, nx, d)
    return M.tocsr()


def ibp_defect(ops: Operators, a: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Relative defect of ``sum D_i(a D_j u) v = -sum_faces (a D_j u) D_i v``."""
    L = divergence_operator(ops, a)
    lhs = float(v.ravel() @ (L @ u.ravel()))
    rhs = 0.0
    for i in range(ops.d):
        flux = _face_avg_coeff(a[..., i, i], i).ravel() * (ops.G[i] @ u.ravel())
        for j in range(ops.d):
            if j != i:
                flux += _face_avg_coeff(a[..., i, j], i).ravel() * (ops.Avg[i] @ ops.F2C[j] @ ops.G[j] @ u.ravel())
        rhs -= float(flux @ (ops.G[i] @ v.ravel()))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


# coefficients ----------------------------------------------------------------------

@dataclass
class DivFormCoefficients:
    """``a`` (d*d components), ``afrak`` and ``b`` (d components) on a shared grid.

    The grid's time slices are the solver's time levels; a single slice means
    time-independent coefficients.
    """
    a: GridField
    afrak: GridField | None = None
    b: GridField | None = None
    delta: float = 1.0

    def __post_init__(self):
        d = self.a.grid.d
        if self.a.components != d * d:
            raise ValueError("a must have d*d components")
        for name in ("afrak", "b"):
            v = getattr(self, name)
            if v is not None and (v.components != d or v.grid.shape != self.a.grid.shape):
                raise ValueError(f"{name} must be a d-vector field on the grid of a")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        self.check_ellipticity()

    @property
    def d(self) -> int:
        return self.a.grid.d

    def matrix(self, i: int) -> np.ndarray:
        d = self.d
        k = min(i, self.a.grid.nt - 1)
        return self.a.values[k].reshape(self.a.grid.spatial_shape + (d, d))

    def vector(self, name: str, i: int):
        v = getattr(self, name)
        if v is None:
            return None
        return v.values[min(i, v.grid.nt - 1)]

    def check_ellipticity(self, n_samples: int = 256, seed: int = 0) -> dict:
        d = self.d
        A = self.a.values.reshape(-1, d, d)
        if not np.allclose(A, np.swapaxes(A, 1, 2), atol=1e-12):
            raise ValueError("a must be symmetric")
        diag = np.diagonal(A, axis1=1, axis2=2)
        off = np.abs(A).sum(-1) - np.abs(diag)
        lo, hi = (diag - off).min(), (diag + off).max()
        ok_gersh = lo >= self.delta and hi <= 1 / self.delta
        idx = np.random.default_rng(seed).choice(len(A), min(n_samples, len(A)), replace=False)
        ev = np.linalg.eigvalsh(A[idx])
        if not ok_gersh:
            ev = np.linalg.eigvalsh(A)
        tol = 1e-12
        if ev.min() < self.delta - tol or ev.max() > 1 / self.delta + tol:
            raise ValueError(f"eigenvalues of a leave [delta, 1/delta] = [{self.delta}, {1 / self.delta}]")
        return {"gershgorin": bool(ok_gersh), "eig_min": float(ev.min()), "eig_max": float(ev.max())}

    @classmethod
    def from_functions(cls, grid: SpaceTimeGrid, a_fn=None, afrak_fn=None, b_fn=None, delta: float = 1.0):
        """Sample coefficient callables ``fn(t, xs)`` on ``grid``; ``a_fn`` defaults to the identity."""
        d = grid.d
        if a_fn is None:
            a = GridField(grid, np.broadcast_to(np.eye(d).ravel(), grid.shape + (d * d,)), d * d)
        else:
            a = GridField.from_function(grid, a_fn, d * d)
        af = None if afrak_fn is None else GridField.from_function(grid, afrak_fn, d)
        b = None if b_fn is None else GridField.from_function(grid, b_fn, d)
        return cls(a, af, b, delta)


def identity_coefficients(grid: SpaceTimeGrid, scale: float = 1.0, delta: float | None = None):
    d = grid.d
    g1 = SpaceTimeGrid(grid.t0, grid.x0, grid.dx**2, grid.dx, 1, grid.nx, d)
    a = GridField(g1, np.broadcast_to(scale * np.eye(d).ravel(), g1.shape + (d * d,)), d * d)
    if delta is None:
        delta = min(scale, 1 / scale)
    return DivFormCoefficients(a, None, None, delta)


# solver ----------------------------------------------------------------------------

@dataclass
class BackwardSolution:
    u: np.ndarray  # (n_levels, *spatial); u[-1] = f, u[0] = u(t0)
    times: np.ndarray
    grid: SpaceTimeGrid  # spatial box; dt is the step
    boundary_max: float
    iterations: list = field(default_factory=list)
    theta: float = 1.0

    def as_field(self) -> GridField:
        g = self.grid
        lg = SpaceTimeGrid(self.times[0] - g.dt / 2, g.x0, g.dt, g.dx, len(self.times), g.nx, g.d)
        return GridField(lg, self.u[..., None], 1)

    @property
    def initial(self) -> np.ndarray:
        return self.u[0]


def _boundary_max(u: np.ndarray) -> float:
    d = u.ndim
    m = 0.0
    for ax in range(d):
        m = max(m, float(np.abs(np.take(u, [0, -1], axis=ax)).max()))
    return m


def spatial_operator(ops: Operators, coeffs: DivFormCoefficients, level: int):
    L = 0.5 * divergence_operator(ops, coeffs.matrix(level), coeffs.vector("afrak", level))
    b = coeffs.vector("b", level)
    if b is not None:
        L = L + upwind_operator(ops, b)
    return L


def solve_backward(coeffs: DivFormCoefficients, f: np.ndarray, T: float, dt: float | None = None,
                   t0: float = 0.0, tol: float = 1e-12, maxiter: int = 2000,
                   theta: float = 1.0) -> BackwardSolution:
    """Solve ``u_t + L u = 0`` on ``[t0, T]`` with ``u(T) = f``.

    ``theta = 1`` is implicit Euler (monotone), ``theta = 1/2`` Crank-Nicolson.
    The default step is ``delta * dx**2``.  Coefficients on a grid with
    several time slices are read at the level being solved for.
    """
    if not 0.5 <= theta <= 1:
        raise ValueError("theta must lie in [1/2, 1]")
    cg = coeffs.a.grid
    d, nx, dx = cg.d, cg.nx, cg.dx
    f = np.asarray(f, float)
    if f.shape != cg.spatial_shape:
        raise ValueError("terminal field has the wrong spatial shape")
    if dt is None:
        dt = coeffs.delta * dx**2
    n_steps = max(1, int(math.ceil((T - t0) / dt - 1e-9)))
    dt = (T - t0) / n_steps
    times = t0 + dt * np.arange(n_steps + 1)
    ops = Operators.build(nx, d, dx)
    u = np.empty((n_steps + 1,) + f.shape)
    u[-1] = f
    time_dep = cg.nt > 1
    I = sparse.identity(nx**d, format="csr")
    A = None
    iters = []
    bmax = _boundary_max(f)
    for j in range(n_steps - 1, -1, -1):
        if A is None or time_dep:
            Lj = spatial_operator(ops, coeffs, j)
            A = (I - theta * dt * Lj).tocsr()
            B = None if theta == 1 else (I + (1 - theta) * dt * Lj).tocsr()
            Mprec = sparse.diags(1.0 / A.diagonal())
        rhs = u[j + 1].ravel() if B is None else B @ u[j + 1].ravel()
        if not rhs.any():
            u[j] = 0.0
            continue
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.bicgstab(A, rhs, x0=rhs, rtol=tol, atol=0.0, maxiter=maxiter, M=Mprec, callback=cb)
        if info != 0:
            res = np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs)
            raise RuntimeError(f"linear solver did not converge at step {j} (info={info}, residual={res:.2e}); "
                               "reduce dt or check the coefficients")
        u[j] = x.reshape(f.shape)
        iters.append(count[0])
        bmax = max(bmax, _boundary_max(u[j]))
    sg = SpaceTimeGrid(t0, cg.x0, dt, dx, n_steps, nx, d)
    scale = max(float(np.abs(f).max()), 1e-300)
    return BackwardSolution(u, times, sg, bmax / scale, iters, theta)


def discrete_residual(sol: BackwardSolution, coeffs: DivFormCoefficients) -> float:
    """``max |(u^{j+1} - u^j)/dt + L u^j|`` relative to ``max |u| / dt``."""
    ops = Operators.build(sol.grid.nx, sol.grid.d, sol.grid.dx)
    dt = sol.grid.dt
    worst = 0.0
    for j in range(len(sol.times) - 1):
        L = spatial_operator(ops, coeffs, j)
        um = sol.theta * sol.u[j] + (1 - sol.theta) * sol.u[j + 1]
        r = (sol.u[j + 1] - sol.u[j]).ravel() / dt + L @ um.ravel()
        worst = max(worst, float(np.abs(r).max()))
    return worst * dt / max(float(np.abs(sol.u).max()), 1e-300)


# energy reports --------------------------------------------------------------------

def _space_integral(g: np.ndarray, grid: SpaceTimeGrid, lam: float) -> float:
    w = ExponentialWeight(lam).on_grid(grid)
    return float(np.sum(g * w) * grid.spatial_cell_volume)


def _central_grad_sq(u: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        pad = [(0, 0)] * u.ndim
        pad[ax] = (1, 1)
        up = np.pad(u, pad)
        n = u.shape[ax]
        g = (np.take(up, np.arange(2, n + 2), axis=ax) - np.take(up, np.arange(0, n), axis=ax)) / (2 * dx)
        out += g**2
    return out


def minimal_N(ratio: float, lam: float, rho0: float, T: float, gradient: bool = False) -> float:
    """Smallest ``N`` with ``ratio <= N' e^{2 lam rho0 + alpha T}``, ``alpha = N rho0^-2 e^{2 lam rho0}``.

    ``N' = N`` for the terminal bound and ``N (1 + 1/alpha)`` for the gradient bound.
    """
    if ratio <= 0:
        return 0.0
    e = math.exp(2 * lam * rho0)

    def g(N):
        alpha = N * e / rho0**2
        pref = N + rho0**2 / e if gradient else N
        return math.log(pref) + 2 * lam * rho0 + alpha * T - math.log(ratio)

    lo = 1e-300
    if gradient and g(lo) >= 0:
        return 0.0
    hi = 1.0
    while g(hi) < 0:
        hi *= 2
    return float(optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-12))


@dataclass
class EnergyReport:
    n: int
    lam: float
    rho0: float
    T: float
    lhs_terminalless: float
    lhs_gradient: float
    terminal: float  # int |f|^{2n} e^{-lam|x|}
    terminal_unweighted: float
    rhs: float
    N_config: float
    N_min_terminal: float
    N_min_gradient: float
    boundary_max: float

    @property
    def ratio_terminal(self) -> float:
        return self.lhs_terminalless / self.terminal_unweighted if self.terminal_unweighted else 0.0

    @property
    def ratio_gradient(self) -> float:
        return self.lhs_gradient / self.terminal_unweighted if self.terminal_unweighted else 0.0

    @property
    def passes(self) -> bool:
        return self.lhs_terminalless <= self.rhs

    @property
    def passes_gradient(self) -> bool:
        alpha = self.N_config * math.exp(2 * self.lam * self.rho0) / self.rho0**2
        return self.lhs_gradient <= (1 + 1 / alpha) * self.rhs

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out.update(ratio_terminal=self.ratio_terminal, ratio_gradient=self.ratio_gradient,
                   passes=self.passes, passes_gradient=self.passes_gradient)
        return out


def energy_report(sol: BackwardSolution, n: int, lam: float, rho0: float, T: float,
                  N_config: float = 1.0, allow_any_n: bool = False) -> EnergyReport:
    if not admissible_n(n, allow_any_n):
        raise ValueError(f"n = {n} is not admissible (1, 4, 6, 8, ...)")
    g = sol.grid
    f = sol.u[-1]
    u0 = sol.u[0]
    lhs0 = _space_integral(np.abs(u0) ** (2 * n), g, lam)
    # gradient term: left-point rule over the implicit levels
    w = ExponentialWeight(lam).on_grid(g)
    lhs_g = 0.0
    for j in range(len(sol.times) - 1):
        uj = sol.u[j]
        lhs_g += float(np.sum(uj ** (2 * n - 2) * _central_grad_sq(uj, g.dx) * w)) * g.spatial_cell_volume * g.dt
    term = _space_integral(np.abs(f) ** (2 * n), g, lam)
    term_u = _space_integral(np.abs(f) ** (2 * n), g, 0.0)
    alpha = N_config * math.exp(2 * lam * rho0) / rho0**2
    rhs = N_config * math.exp(2 * lam * rho0 + alpha * T) * term
    r0 = lhs0 / term if term else 0.0
    rg = lhs_g / term if term else 0.0
    return EnergyReport(n, lam, rho0, T, lhs0, lhs_g, term, term_u, rhs, N_config,
                        minimal_N(r0, lam, rho0, T), minimal_N(rg, lam, rho0, T, gradient=True), sol.boundary_max)


def polynomial_weight_report(sol: BackwardSolution, s: float, n: int, allow_any_n: bool = False) -> dict:
    """Both sides of the ``(1 + |x|)**s`` weighted terminal bound."""
    if not admissible_n(n, allow_any_n):
        raise ValueError(f"n = {n} is not admissible (1, 4, 6, 8, ...)")
    g = sol.grid
    wt = (1 + g.radius()) ** s
    vol = g.spatial_cell_volume
    lhs = float(np.sum(wt * np.abs(sol.u[0]) ** (2 * n)) * vol)
    rhs = float(np.sum(wt * np.abs(sol.u[-1]) ** (2 * n)) * vol)
    return {"s": s, "n": n, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs else 0.0}


def polynomial_weight_equivalence(d: int, s: float, norms, n_rho: int = 80, n_ang: int = 64) -> np.ndarray:
    """``int (1+|y|)**s e^{-|x-y|} dy / (1+|x|)**s`` at ``|x|`` in ``norms``.

    Polar coordinates about ``x``: Gauss-Laguerre in the radius and
    Gauss-Jacobi in the cosine of the angle to ``x`` (the integrand depends on
    that angle only).
    """
    rho, wr = special.roots_genlaguerre(n_rho, d - 1)
    jac = (d - 3) / 2
    u, wu = special.roots_jacobi(n_ang, jac, jac)
    sphere = 2 * math.pi ** ((d - 1) / 2) / math.gamma((d - 1) / 2)  # |S^{d-2}|
    out = []
    for xn in np.atleast_1d(norms):
        dist = np.sqrt(xn**2 + rho[:, None] ** 2 + 2 * xn * rho[:, None] * u[None])
        val = sphere * np.sum(wr[:, None] * wu[None] * (1 + dist) ** s)
        out.append(val / (1 + xn) ** s)
    return np.array(out)


def weight_equivalence_oracle(d: int, s: float, xn: float) -> float:
    """Independent check of :func:`polynomial_weight_equivalence` by adaptive quadrature (d = 2)."""
    if d != 2:
        raise ValueError("oracle implemented for d = 2")

    def inner(th):
        f = lambda r: r * math.exp(-r) * (1 + math.sqrt(xn**2 + r * r + 2 * xn * r * math.cos(th))) ** s
        return integrate.quad(f, 0, np.inf, limit=200)[0]

    return 2 * integrate.quad(inner, 0, math.pi, limit=200)[0] / (1 + xn) ** s


def uniform_drift_energy_report(sol: BackwardSolution, coeffs: DivFormCoefficients, n: int,
                                lam: float = 0.0, allow_any_n: bool = False) -> dict:
    """Gronwall form ``int u(0)^{2n} w <= exp(C int sup(|afrak|+|b|)^2 dt) int f^{2n} w``; reports the minimal ``C``."""
    if not admissible_n(n, allow_any_n):
        raise ValueError(f"n = {n} is not admissible (1, 4, 6, 8, ...)")
    g = sol.grid
    lhs = _space_integral(np.abs(sol.u[0]) ** (2 * n), g, lam)
    rhs = _space_integral(np.abs(sol.u[-1]) ** (2 * n), g, lam)
    cg = coeffs.a.grid
    sup = np.zeros(cg.nt)
    for name in ("afrak", "b"):
        v = getattr(coeffs, name)
        if v is not None:
            sup = sup + np.sqrt((v.values**2).sum(-1)).reshape(cg.nt, -1).max(1)
    if cg.nt == 1:
        drift_int = float(sup[0] ** 2 * (sol.times[-1] - sol.times[0]))
    else:
        lg = SpaceTimeGrid(sol.times[0] - g.dt / 2, g.x0, g.dt, g.dx, cg.nt, g.nx, g.d)
        drift_int = float(np.dot(time_window_weights(lg, sol.times[0], sol.times[-1]), sup**2))
    ratio = lhs / rhs if rhs else 0.0
    if ratio <= 1 or drift_int == 0:
        C = 0.0
    else:
        C = math.log(ratio) / drift_int
    return {"n": n, "lhs": lhs, "rhs": rhs, "ratio": ratio, "drift_integral": drift_int, "C_min": C,
            "contraction": ratio <= 1 + 1e-12}


# closed forms used by tests and experiments ----------------------------------------

def gaussian(points_norm2: np.ndarray, var: float, d: int) -> np.ndarray:
    """Unnormalised Gaussian ``exp(-|x|^2 / (2 var))``."""
    return np.exp(-points_norm2 / (2 * var))


def heat_gaussian(norm2: np.ndarray, v: float, tau: float, d: int, rate: float = 1.0) -> np.ndarray:
    """``u`` for ``a = rate * I``: terminal ``exp(-|x|^2/(2v))`` after backward time ``tau``."""
    w = v + rate * tau
    return (v / w) ** (d / 2) * np.exp(-norm2 / (2 * w))
