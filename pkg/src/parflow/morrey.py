"""Capped and homogeneous parabolic Morrey norms computed by finite cylinder scans.

For a radius ``r`` the scan evaluates the normalised ``L_p`` mean of ``|f|`` over
every cylinder ``C_r(t, x)`` whose base time and centre sit on a strided
sub-lattice of cell centres.  Ball sums come from an FFT convolution of
``|f|**p`` with the discrete ball, time windows from cumulative sums, so one
radius costs one convolution of the whole field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft

from .grid import (GridField, ParabolicCylinder, SpaceTimeGrid, ball_volume, boundary_mass_fraction,
                   check_same_grid, cylinder_mean, time_window_weights)

DEFAULT_P0 = 2.5


@dataclass(frozen=True)
class MorreyParams:
    p: float = DEFAULT_P0
    rho: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("Morrey exponent p must be > 1")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("radius cap rho must be > 0")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("scaling power beta must be > 0")

    def trivial_regime(self, d: int) -> bool:
        """True when ``p * beta > d + 2`` (only the zero field has finite norm)."""
        return self.beta is not None and self.p * self.beta > d + 2

    def critical_range(self, d: int) -> bool:
        """Whether p lies in (2, 2 + d], the range where the energy estimates apply."""
        return 2 < self.p <= 2 + d


@dataclass
class MorreyReport:
    value: float
    argmax_cylinder: ParabolicCylinder | None
    scan_resolution: tuple
    boundary_mass: float = 0.0
    per_radius: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "cylinder": None if self.argmax_cylinder is None else self.argmax_cylinder.as_dict(),
            "scan": {"radii": self.scan_resolution[0], "stride": self.scan_resolution[1],
                     "per_radius": self.per_radius},
            "boundary_mass": self.boundary_mass,
            "flags": self.flags,
        }


def radius_ladder(r_min: float, r_max: float, per_decade: int = 8) -> np.ndarray:
    """Geometric radius ladder ending exactly at ``r_max``."""
    if not 0 < r_min <= r_max:
        raise ValueError("need 0 < r_min <= r_max")
    n = max(1, int(math.ceil(per_decade * math.log10(r_max / r_min))))
    return r_max * (r_min / r_max) ** (np.arange(n, -1, -1) / n)


def default_radii(grid: SpaceTimeGrid, r_max: float, per_decade: int = 8) -> np.ndarray:
    return radius_ladder(min(2 * grid.dx, r_max), r_max, per_decade)


def _ball_offsets(grid: SpaceTimeGrid, r: float):
    # offsets beyond the box never meet data
    k = min(int(math.ceil(r / grid.dx)), grid.nx - 1)
    ax = np.arange(-k, k + 1) * grid.dx
    mesh = np.meshgrid(*[ax] * grid.d, indexing="ij")
    return k, (sum(m**2 for m in mesh) < r**2).astype(float)


def _ball_sums(a: np.ndarray, grid: SpaceTimeGrid, r: float) -> np.ndarray:
    """Per-slice sums of ``a`` over discrete balls centred at every cell."""
    k, ball = _ball_offsets(grid, r)
    d = grid.d
    if k == 0:
        return a.copy()
    shape = [fft.next_fast_len(grid.nx + 2 * k, real=True)] * d
    axes = tuple(range(1, d + 1))
    A = fft.rfftn(a, shape, axes=axes)
    B = fft.rfftn(ball, shape)
    out = fft.irfftn(A * B, shape, axes=axes)
    sl = (slice(None),) + (slice(k, k + grid.nx),) * d
    res = out[sl]
    # FFT round-off on exact zeros
    res[np.abs(res) < 1e-12 * float(np.abs(a).max()) * ball.sum()] = 0.0
    return np.maximum(res, 0.0)


def _time_windows(a: np.ndarray, n: int) -> np.ndarray:
    """``sum_{l < n} a[i + l]`` (truncated at the grid end) for every base index i."""
    cs = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
    idx = np.arange(a.shape[0])
    hi = np.minimum(idx + n, a.shape[0])
    return cs[hi] - cs[idx]


@lru_cache(maxsize=64)
def _spatial_counts(grid: SpaceTimeGrid, r: float) -> np.ndarray:
    out = _ball_sums(np.ones((1,) + grid.spatial_shape), grid, r)[0]
    out.flags.writeable = False
    return out


def _counts(grid: SpaceTimeGrid, r: float, n_t: int) -> np.ndarray:
    """Number of grid cells of ``C_r`` inside the box, for every base cell."""
    sp = np.rint(_spatial_counts(grid, r))
    idx = np.arange(grid.nt)
    tcount = np.minimum(idx + n_t, grid.nt) - idx
    return tcount.reshape((-1,) + (1,) * grid.d) * sp[None]


def scan_means(f: GridField, p: float, radii, stride: int = 2, normalize: str = "intersection"):
    """Yield ``(r, means, centre_index)`` with ``means`` the L_p mean on the scan lattice."""
    grid = f.grid
    apow = f.magnitude() ** p
    lat = (slice(None, None, stride),) * (grid.d + 1)
    for r in radii:
        n_t = max(1, int(math.ceil(r**2 / grid.dt - 1e-12)))
        sums = _time_windows(_ball_sums(apow, grid, r), n_t)[lat]
        if normalize == "intersection":
            counts = _counts(grid, float(r), n_t)[lat]
            means = np.where(counts > 0.5, sums / np.maximum(np.rint(counts), 1.0), 0.0)
        else:
            means = sums * grid.cell_volume / (r**2 * ball_volume(grid.d, r))
        yield r, means


def _scan(f: GridField, p: float, weights_fn, radii, stride: int, normalize: str):
    grid = f.grid
    radii = np.asarray(sorted(radii), float)
    if radii.size == 0:
        raise ValueError("empty radius list")
    if radii[0] < 2 * grid.dx * (1 - 1e-9):
        raise ValueError(f"radius under-resolved: r = {radii[0]:.3g} < 2 dx = {2 * grid.dx:.3g}")
    # normalise by the sup so |f|**p cannot under- or overflow; the norm is 1-homogeneous
    scale = float(f.magnitude().max()) if f.values.size else 0.0
    unit = f.scaled(1.0 / scale) if scale > 0 and math.isfinite(scale) else f
    if unit is f:
        scale = 1.0
    best, best_cyl, per_radius = -1.0, None, []
    for r, means in scan_means(unit, p, radii, stride, normalize):
        vals = weights_fn(r) * scale * means ** (1.0 / p)
        j = int(np.argmax(vals))
        v = float(vals.flat[j])
        idx = np.unravel_index(j, vals.shape)
        idx = tuple(stride * i for i in idx)
        cyl = ParabolicCylinder(float(grid.t_centers[idx[0]]),
                                tuple(float(grid.x_centers(a)[idx[a + 1]]) for a in range(grid.d)), float(r))
        per_radius.append({"r": float(r), "value": v})
        if v > best:
            best, best_cyl = v, cyl
    return MorreyReport(
        value=max(best, 0.0),
        argmax_cylinder=best_cyl,
        scan_resolution=(len(radii), stride),
        boundary_mass=boundary_mass_fraction(grid, best_cyl),
        per_radius=per_radius,
    )


def morrey_capped(f: GridField, params: MorreyParams, radii=None, stride: int = 2,
                  radii_per_decade: int = 8, normalize: str = "intersection") -> MorreyReport:
    """``sup_{r <= rho} r sup_C`` of the normalised L_p norm over the scan."""
    if params.rho is None:
        raise ValueError("capped Morrey norm needs rho")
    if radii is None:
        radii = default_radii(f.grid, params.rho, radii_per_decade)
    radii = np.asarray(radii, float)
    if np.any(radii > params.rho * (1 + 1e-12)):
        raise ValueError("radius list must lie in (0, rho]")
    rep = _scan(f, params.p, lambda r: r, radii, stride, normalize)
    if not params.critical_range(f.grid.d):
        rep.flags.append("p outside (2, 2+d]")
    return rep


def morrey_homogeneous(f: GridField, params: MorreyParams, radii=None, stride: int = 2,
                       radii_per_decade: int = 8, r_max: float | None = None,
                       normalize: str = "intersection") -> MorreyReport:
    """``sup_{rho, C} rho**beta`` times the normalised L_p norm, over the scan."""
    beta = 1.0 if params.beta is None else params.beta
    if radii is None:
        g = f.grid
        if r_max is None:
            r_max = max(g.nx * g.dx * math.sqrt(g.d), math.sqrt(g.nt * g.dt))
        radii = radius_ladder(2 * g.dx, r_max, radii_per_decade)
    rep = _scan(f, params.p, lambda r: r**beta, radii, stride, normalize)
    if MorreyParams(params.p, None, beta).trivial_regime(f.grid.d):
        rep.flags.append("p*beta > d+2: only the zero field has finite norm")
    return rep


def origin_profile(f: GridField, p: float, radii, t: float | None = None, x=None, beta: float = 1.0):
    """``r**beta`` times the normalised L_p norm on cylinders with a fixed centre."""
    g = f.grid
    t = g.t0 if t is None else t
    x = (0.0,) * g.d if x is None else x
    return np.array([r**beta * cylinder_mean(f, ParabolicCylinder(t, x, r), p) for r in radii])


def indicator_field(grid: SpaceTimeGrid, C: ParabolicCylinder) -> GridField:
    tc = grid.t_centers
    tmask = (tc >= C.t) & (tc < C.t + C.r**2)
    r2 = sum((c - xc) ** 2 for c, xc in zip(grid.space_mesh(), C.x))
    vals = tmask.reshape((-1,) + (1,) * grid.d) & (r2 < C.r**2)[None]
    return GridField(grid, vals.astype(float)[..., None], 1)


def indicator_morrey_check(C: ParabolicCylinder, rho0: float, p0: float, b: GridField,
                           stride: int = 1, radii_per_decade: int = 8, tol: float = 0.05) -> dict:
    """Check ``||I_C b||_{E_{p0,1}} <= b_hat_{p0,rho0}`` and ``||I_C||_{E_{p0,1}} <= rho0``."""
    grid = b.grid
    if C.r > rho0 * (1 + 1e-12):
        raise ValueError("cylinder radius exceeds rho0")
    ind = indicator_field(grid, C)
    if not ind.values.any():
        raise ValueError("cylinder outside domain")
    mag = b.magnitude()
    ib = GridField(grid, (ind.scalar * mag)[..., None], 1)
    params_h = MorreyParams(p0, beta=1.0)
    # both fields vanish near the box boundary, so zero extension is exact: divide by the full |C_r|
    ib_norm = morrey_homogeneous(ib, params_h, stride=stride, radii_per_decade=radii_per_decade,
                                 normalize="full").value
    i_norm = morrey_homogeneous(ind, params_h, stride=stride, radii_per_decade=radii_per_decade,
                                normalize="full").value
    bhat = morrey_capped(GridField(grid, mag[..., None], 1), MorreyParams(p0, rho=rho0), stride=stride,
                         radii_per_decade=radii_per_decade).value
    ok1 = ib_norm <= bhat * (1 + tol) + 1e-300
    ok2 = i_norm <= rho0 * (1 + tol)
    return {"holds": bool(ok1 and ok2), "indicator_b_norm": ib_norm, "b_hat": bhat,
            "indicator_norm": i_norm, "rho0": rho0, "slack_b": bhat - ib_norm, "slack_indicator": rho0 - i_norm}


def drift_split_norms(b_M: GridField, b_B: GridField, p0: float = DEFAULT_P0, rho: float = 1.0,
                      **scan) -> tuple:
    """``(b_hat_{M,p0,rho}, int sup_x |b_B(t, x)|**2 dt)``."""
    check_same_grid(b_M, b_B)
    grid = b_B.grid
    morrey = morrey_capped(b_M, MorreyParams(p0, rho=rho), **scan).value if b_M.values.any() else 0.0
    bar = b_B.magnitude().reshape(grid.nt, -1).max(axis=1)
    tw = time_window_weights(grid, grid.t0, grid.t_end)
    return morrey, float(np.dot(tw, bar**2))
