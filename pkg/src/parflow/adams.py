"""Empirical constants for the parabolic Adams inequality, its dual and the weighted heat bound.

Every ratio here is a quotient of two sides that scale identically in each
input, so families of rough test fields give empirical lower bounds for the
(existential) constants.  Ratios are reported as maxima over a family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, special

from .grid import GridField, SpaceTimeGrid, check_same_grid
from .morrey import MorreyParams, morrey_homogeneous
from .riesz import Cutoffs, KernelSpec, apply_potential


@dataclass
class AdamsCase:
    b: GridField
    f: GridField
    spec: KernelSpec
    p: float = 2.5
    q: float = 2.0
    case_id: int = 0

    def __post_init__(self):
        check_same_grid(self.b, self.f)
        if not 1 < self.q < self.p:
            raise ValueError("need 1 < q < p")
        if self.b.values.min() < 0 or self.f.values.min() < 0:
            raise ValueError("b and f must be nonnegative")

    @property
    def q_dual(self) -> float:
        return self.q / (self.q - 1)


@dataclass
class RatioReport:
    ratio: float
    numerator: float
    denominator: float
    family_size: int
    worst_case: int
    rows: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def lq_norm(a: np.ndarray, grid: SpaceTimeGrid, q: float) -> float:
    return float((np.sum(np.abs(a) ** q) * grid.cell_volume) ** (1 / q))


def _morrey_b(b: GridField, p: float, beta: float, stride: int, radii_per_decade: int) -> float:
    return morrey_homogeneous(b, MorreyParams(p, beta=beta), stride=stride,
                              radii_per_decade=radii_per_decade).value


def _full_horizon(grid: SpaceTimeGrid) -> Cutoffs:
    return Cutoffs(time_horizon=grid.nt * grid.dt)


def adjoint_potential(spec: KernelSpec, g: GridField) -> np.ndarray:
    """Adjoint of ``P_{alpha,k}``: the same kernel looking into the past (time reversal)."""
    rev = GridField(g.grid, g.values[::-1], g.components)
    return apply_potential(spec, rev, _full_horizon(g.grid)).field.values[::-1, ..., 0]


def adams_ratio(case: AdamsCase, stride: int = 2, radii_per_decade: int = 8, detail: bool = False,
                morrey: float | None = None):
    """``||b P f||_q / (||b||_{E_{p,alpha}} ||f||_q)``."""
    g = case.b.grid
    if morrey is None:
        morrey = _morrey_b(case.b, case.p, case.spec.alpha, stride, radii_per_decade)
    lq_f = lq_norm(case.f.scalar, g, case.q)
    if morrey == 0 or lq_f == 0:
        if not case.f.values.any() and morrey > 0:
            return (0.0, 0.0, 0.0) if detail else 0.0
        raise ValueError("degenerate case")
    Pf = apply_potential(case.spec, case.f, _full_horizon(g)).field.scalar
    num = lq_norm(case.b.scalar * Pf, g, case.q)
    ratio = num / (morrey * lq_f)
    return (ratio, morrey, lq_f) if detail else ratio


def dual_adams_ratio(case: AdamsCase, stride: int = 2, radii_per_decade: int = 8, detail: bool = False,
                     morrey: float | None = None):
    """``||P^*(b f)||_{q'} / (||b||_{E_{p,alpha}} ||f||_{q'})`` with ``P^*`` the time-reversed potential."""
    g = case.b.grid
    qd = case.q_dual
    if morrey is None:
        morrey = _morrey_b(case.b, case.p, case.spec.alpha, stride, radii_per_decade)
    lq_f = lq_norm(case.f.scalar, g, qd)
    if morrey == 0 or lq_f == 0:
        if not case.f.values.any() and morrey > 0:
            return (0.0, 0.0, 0.0) if detail else 0.0
        raise ValueError("degenerate case")
    bf = GridField(g, (case.b.scalar * case.f.scalar)[..., None], 1)
    num = lq_norm(adjoint_potential(case.spec, bf), g, qd)
    ratio = num / (morrey * lq_f)
    return (ratio, morrey, lq_f) if detail else ratio


def _report(rows) -> RatioReport:
    j = int(np.argmax([r["ratio"] for r in rows]))
    w = rows[j]
    return RatioReport(w["ratio"], w["ratio"] * w["morrey_b"] * w["lq_f"], w["morrey_b"] * w["lq_f"],
                       len(rows), w["case_id"], rows)


def family_reports(cases, stride: int = 2, radii_per_decade: int = 8) -> tuple:
    """``(primal, dual)`` reports sharing one Morrey scan per case."""
    rows, drows = [], []
    for c in cases:
        m = _morrey_b(c.b, c.p, c.spec.alpha, stride, radii_per_decade)
        for fn, out in ((adams_ratio, rows), (dual_adams_ratio, drows)):
            r, _, l = fn(c, detail=True, morrey=m)
            out.append({"case_id": c.case_id, "ratio": r, "morrey_b": m, "lq_f": l})
    return _report(rows), _report(drows)


def family_report(cases, dual: bool = False, **kw) -> RatioReport:
    fn = dual_adams_ratio if dual else adams_ratio
    rows = []
    for c in cases:
        r, m, l = fn(c, detail=True, **kw)
        rows.append({"case_id": c.case_id, "ratio": r, "morrey_b": m, "lq_f": l})
    return _report(rows)


# heat extension --------------------------------------------------------------------

def _heat_weights(tau: float, dx: float, n: int) -> np.ndarray:
    """Cell-integrated 1D Gaussian of variance ``2 tau`` on offsets ``-n..n``."""
    o = np.arange(-n, n + 1)
    s = math.sqrt(4 * tau)
    return 0.5 * (special.erf((o + 0.5) * dx / s) - special.erf((o - 0.5) * dx / s))


def heat_extension(f: np.ndarray, grid: SpaceTimeGrid, T: float) -> GridField:
    """``u(t) = (4 pi (T-t))**(-d/2) int exp(-|x-y|**2/(4(T-t))) f(y) dy`` on the grid's time slices.

    Slices with ``t >= T`` (within round-off) get ``f`` itself.  The Gaussian is
    integrated exactly over each cell, so mass is conserved up to leakage out
    of the box.
    """
    f = np.asarray(f, float)
    if f.shape != grid.spatial_shape:
        raise ValueError("terminal field has the wrong spatial shape")
    if not np.all(np.isfinite(f)):
        raise ValueError("terminal field must be finite")
    if grid.t_centers[-1] > T * (1 + 1e-12) + 1e-12:
        raise ValueError("grid extends past the terminal time")
    out = np.empty(grid.shape)
    for i, t in enumerate(grid.t_centers):
        tau = T - t
        if tau <= 1e-14 * max(1.0, abs(T)):
            out[i] = f
            continue
        w = _heat_weights(tau, grid.dx, grid.nx - 1)
        u = f
        for ax in range(grid.d):
            u = ndimage.convolve1d(u, w, axis=ax, mode="constant")
        out[i] = u
    return GridField(grid, out[..., None], 1)


def weighted_heat_ratio(b: GridField, f: np.ndarray, p: float, T: float, stride: int = 2,
                        radii_per_decade: int = 8) -> float:
    """``int b**2 u**2 / (||b||_{E_{p,1}}**2 int f**2)`` with ``u`` the heat extension of ``f``."""
    if not p > 2:
        raise ValueError("need p > 2")
    g = b.grid
    f = np.asarray(f, float)
    if f.min() < 0 or b.values.min() < 0:
        raise ValueError("b and f must be nonnegative")
    f2 = float(np.sum(f**2) * g.spatial_cell_volume)
    if f2 == 0:
        return 0.0
    morrey = _morrey_b(b, p, 1.0, stride, radii_per_decade)
    if morrey == 0:
        raise ValueError("degenerate case")
    u = heat_extension(f, g, T).scalar
    num = float(np.sum(b.scalar**2 * u**2) * g.cell_volume)
    return num / (morrey**2 * f2)


# seeded test families --------------------------------------------------------------

@dataclass(frozen=True)
class Piece:
    kind: str  # "bump" | "singular" | "indicator"
    weight: float
    tc: float
    xc: tuple
    scale: float

    def __call__(self, t, xs, eps: float):
        r2 = sum((x - c) ** 2 for x, c in zip(xs, self.xc))
        if self.kind == "bump":
            q = ((t - self.tc) / self.scale**2) ** 2 + r2 / self.scale**2
            return self.weight * np.where(q < 1, np.exp(1 - 1 / np.maximum(1 - q, 1e-300)), 0.0)
        if self.kind == "singular":
            prof = (np.abs(t - self.tc) + r2 + eps**2) ** -0.5
            q = ((t - self.tc) / self.scale**2) ** 2 + r2 / self.scale**2
            cut = np.where(q < 1, np.exp(1 - 1 / np.maximum(1 - q, 1e-300)), 0.0)
            return self.weight * self.scale * prof * cut
        if self.kind == "indicator":
            inside = (t >= self.tc) & (t < self.tc + self.scale**2) & (r2 < self.scale**2)
            return self.weight * inside.astype(float)
        raise ValueError(f"unknown piece kind {self.kind!r}")


@dataclass(frozen=True)
class Mixture:
    pieces: tuple

    def field(self, grid: SpaceTimeGrid, eps: float | None = None) -> GridField:
        eps = 2 * grid.dx if eps is None else eps
        return GridField.from_function(grid, lambda t, xs: sum(pc(t, xs, eps) for pc in self.pieces))


def random_mixture(rng: np.random.Generator, t_range, x_range, d: int, n_pieces: int = 3) -> Mixture:
    (t0, t1), (x0, x1) = t_range, x_range
    span = x1 - x0
    kinds = ("bump", "singular", "indicator")
    pieces = []
    for _ in range(n_pieces):
        kind = kinds[rng.integers(3)]
        scale = rng.uniform(0.1, 0.3) * span
        tc = rng.uniform(t0, t1 - min(scale**2, 0.5 * (t1 - t0)))
        xc = tuple(rng.uniform(x0 + 0.3 * span, x1 - 0.3 * span, size=d))
        pieces.append(Piece(kind, float(rng.uniform(0.2, 1.0)), float(tc), tuple(map(float, xc)), float(scale)))
    return Mixture(tuple(pieces))


def adams_family(seed: int, size: int, t_range=(0.0, 1.0), x_range=(-1.0, 1.0), d: int = 2):
    """``size`` seeded pairs ``(b, f)`` of mixtures; resample with :meth:`Mixture.field`."""
    rng = np.random.default_rng(seed)
    return [(random_mixture(rng, t_range, x_range, d), random_mixture(rng, t_range, x_range, d))
            for _ in range(size)]


def family_cases(family, grid: SpaceTimeGrid, spec: KernelSpec, p: float = 2.5, q: float = 2.0):
    return [AdamsCase(bm.field(grid), fm.field(grid), spec, p, q, i) for i, (bm, fm) in enumerate(family)]
