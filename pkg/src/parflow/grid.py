"""Uniform space-time grids, grid-sampled fields, parabolic cylinders and
weighted quadrature.

Samples are cell-centred: time sample ``i`` sits at ``t0 + (i + 1/2) dt`` and
represents the cell ``[t0 + i dt, t0 + (i + 1) dt)``; likewise in every space
direction, so the spatial box is ``[x0, x0 + nx dx]`` per axis.  All
quadrature is the midpoint rule on these cells.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GridScalingWarning(UserWarning):
    """Emitted when dt/dx**2 is far from parabolic balance."""


def ball_volume(d: int, r: float = 1.0) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


@dataclass(frozen=True)
class SpaceTimeGrid:
    t0: float
    x0: tuple
    dt: float
    dx: float
    nt: int
    nx: int
    d: int

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.broadcast_to(np.asarray(self.x0, float), (self.d,)))
        object.__setattr__(self, "x0", x0)
        if self.d < 2:
            raise ValueError("spatial dimension d must be >= 2")
        if not (self.dt > 0 and self.dx > 0):
            raise ValueError("grid spacings must be positive")
        if self.nt < 1 or self.nx < 2:
            raise ValueError("need nt >= 1 and nx >= 2")
        npts = self.nt * self.nx**self.d
        if npts * 8 > sys.maxsize // 4:
            raise MemoryError(f"grid with {npts} points does not fit addressable memory")
        ratio = self.dt / self.dx**2
        if not 0.1 <= ratio <= 10.0:
            warnings.warn(
                f"dt/dx^2 = {ratio:.3g} is outside [0.1, 10]; parabolic scaling checks "
                "assume a near-parabolic grid",
                GridScalingWarning,
                stacklevel=3,
            )

    @classmethod
    def box(cls, t_range, x_range, nt, nx, d, **kw):
        """Grid covering ``t_range x x_range**d`` with ``nt`` x ``nx**d`` cells."""
        ta, tb = t_range
        xa, xb = x_range
        return cls(t0=ta, x0=(xa,) * d, dt=(tb - ta) / nt, dx=(xb - xa) / nx, nt=nt, nx=nx, d=d, **kw)

    @property
    def spatial_shape(self) -> tuple:
        return (self.nx,) * self.d

    @property
    def shape(self) -> tuple:
        return (self.nt,) + self.spatial_shape

    @property
    def cell_volume(self) -> float:
        return self.dt * self.dx**self.d

    @property
    def spatial_cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def t_centers(self) -> np.ndarray:
        return self.t0 + (np.arange(self.nt) + 0.5) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + self.nt * self.dt

    def x_centers(self, axis: int = 0) -> np.ndarray:
        return self.x0[axis] + (np.arange(self.nx) + 0.5) * self.dx

    def space_mesh(self) -> list:
        """Sparse (broadcastable) coordinate arrays, one per axis."""
        out = []
        for i in range(self.d):
            shape = [1] * self.d
            shape[i] = self.nx
            out.append(self.x_centers(i).reshape(shape))
        return out

    def space_points(self) -> np.ndarray:
        """Dense array of cell centres, shape ``spatial_shape + (d,)``."""
        return np.stack(np.meshgrid(*[self.x_centers(i) for i in range(self.d)], indexing="ij"), -1)

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.space_mesh()))

    def spatial_volume(self) -> float:
        return (self.nx * self.dx) ** self.d

    def refine(self, factor: int = 2, time_factor: int | None = None) -> "SpaceTimeGrid":
        tf = factor if time_factor is None else time_factor
        return SpaceTimeGrid(self.t0, self.x0, self.dt / tf, self.dx / factor,
                             self.nt * tf, self.nx * factor, self.d)

    def same_as(self, other: "SpaceTimeGrid") -> bool:
        return self == other


@dataclass(frozen=True)
class GridField:
    """A scalar/vector/matrix field sampled on a grid (time-major storage).

    ``values`` has shape ``grid.shape + (components,)``.
    """

    grid: SpaceTimeGrid
    values: np.ndarray = field(repr=False)
    components: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = self.grid.shape + (self.components,)
        if v.shape != expected:
            if v.size != math.prod(expected):
                raise ValueError(f"values has {v.size} entries, expected {math.prod(expected)}")
            v = v.reshape(expected)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, grid, arr, components: int | None = None) -> "GridField":
        arr = np.asarray(arr, float)
        if components is None:
            components = 1 if arr.shape == grid.shape else arr.shape[-1]
        return cls(grid, arr, components)

    @classmethod
    def constant(cls, grid, c: float, components: int = 1) -> "GridField":
        return cls(grid, np.full(grid.shape + (components,), float(c)), components)

    @classmethod
    def from_function(cls, grid, fn: Callable, components: int = 1) -> "GridField":
        """Point-sample ``fn(t, x)`` at cell centres.

        ``t`` is broadcast with shape ``(nt, 1, ..., 1)`` and ``x`` is a list of
        sparse coordinate arrays with a leading singleton time axis.
        """
        t = grid.t_centers.reshape((grid.nt,) + (1,) * grid.d)
        xs = [c[None] for c in grid.space_mesh()]
        out = np.asarray(fn(t, xs), float)
        if components == 1:
            out = np.broadcast_to(out, grid.shape)[..., None]
        else:
            out = np.broadcast_to(out, grid.shape + (components,))
        return cls(grid, out, components)

    @classmethod
    def from_spatial_lp(cls, grid, fn: Callable, p: float, **kw) -> "GridField":
        """Time-independent scalar field with L_p-consistent cell values.

        Each cell stores ``(cell average of |fn|**p)**(1/p)`` computed by
        adaptive cubature, so L_p means of singular profiles are exact up to
        cell-membership effects.  ``fn`` maps points ``(N, d)`` to ``(N,)``.
        """
        pts = grid.space_points().reshape(-1, grid.d)
        cell = cell_lp_average(fn, pts, grid.dx, p, **kw).reshape(grid.spatial_shape)
        return cls(grid, np.broadcast_to(cell, grid.shape)[..., None], 1)

    @property
    def scalar(self) -> np.ndarray:
        if self.components != 1:
            raise ValueError("field is not scalar")
        return self.values[..., 0]

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (Frobenius for matrix fields) norm."""
        if self.components == 1:
            return np.abs(self.values[..., 0])
        return np.sqrt((self.values**2).sum(-1))

    def slice(self, i: int) -> np.ndarray:
        return self.values[i]

    def scaled(self, c: float) -> "GridField":
        return GridField(self.grid, c * self.values, self.components)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "GridField":
        return GridField(self.grid, fn(self.values), self.components)

    def __add__(self, other: "GridField") -> "GridField":
        check_same_grid(self, other)
        return GridField(self.grid, self.values + other.values, self.components)


def check_same_grid(*fields: GridField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("grid mismatch")


@dataclass(frozen=True)
class ParabolicCylinder:
    """``[t, t + r**2) x B_r(x)``."""

    t: float
    x: tuple
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("cylinder radius must be positive")
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))

    @property
    def d(self) -> int:
        return len(self.x)

    @property
    def measure(self) -> float:
        return self.r**2 * ball_volume(self.d, self.r)

    def as_dict(self) -> dict:
        return {"t": self.t, "x": list(self.x), "r": self.r}


@dataclass(frozen=True)
class ExponentialWeight:
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("decay rate must be >= 0")

    def __call__(self, r):
        return np.exp(-self.lam * np.asarray(r, float))

    def on_grid(self, grid: SpaceTimeGrid) -> np.ndarray:
        return self(grid.radius())


def _cylinder_mask(grid: SpaceTimeGrid, C: ParabolicCylinder):
    """Time index range and spatial boolean mask of cells whose centres lie in C."""
    if C.d != grid.d:
        raise ValueError("cylinder dimension does not match grid")
    tc = grid.t_centers
    i0 = int(np.searchsorted(tc, C.t, side="left"))
    i1 = int(np.searchsorted(tc, C.t + C.r**2, side="left"))
    r2 = sum((c - xc) ** 2 for c, xc in zip(grid.space_mesh(), C.x))
    return i0, i1, r2 < C.r**2


def cylinder_mean(f: GridField, C: ParabolicCylinder, p: float, normalize: str = "intersection") -> float:
    """Normalised L_p norm of |f| over a parabolic cylinder.

    Cells belong to ``C`` iff their centres do.  With
    ``normalize="intersection"`` (default) the average is over the cells of
    ``C`` inside the box; ``"full"`` divides by the exact ``|C|`` instead.
    """
    if not p >= 1:
        raise ValueError("invalid exponent: p must be >= 1")
    i0, i1, mask = _cylinder_mask(f.grid, C)
    count = (i1 - i0) * int(mask.sum())
    if count == 0:
        raise ValueError("cylinder outside domain")
    vals = f.magnitude()[i0:i1][:, mask]
    scale = float(vals.max())
    if not scale > 0:
        return 0.0
    total = float(np.sum((vals / scale) ** p))
    if normalize == "intersection":
        mean = total / count
    elif normalize == "full":
        mean = total * f.grid.cell_volume / C.measure
    else:
        raise ValueError(f"unknown normalisation {normalize!r}")
    return scale * mean ** (1.0 / p)


def boundary_mass_fraction(grid: SpaceTimeGrid, C: ParabolicCylinder) -> float:
    """Fraction of |C| not covered by grid cells (truncation diagnostic)."""
    i0, i1, mask = _cylinder_mask(grid, C)
    covered = (i1 - i0) * int(mask.sum()) * grid.cell_volume
    return max(0.0, 1.0 - covered / C.measure)


def weighted_space_integral(g: np.ndarray, grid: SpaceTimeGrid, w: ExponentialWeight) -> float:
    """Midpoint value of ``int g(x) exp(-lam |x|) dx`` over the spatial box."""
    g = np.asarray(g, float)
    if g.shape == grid.spatial_shape + (1,):
        g = g[..., 0]
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite input")
    return float(np.sum(g * w.on_grid(grid)) * grid.spatial_cell_volume)


def time_window_weights(grid: SpaceTimeGrid, t_a: float, t_b: float) -> np.ndarray:
    """Overlap length of each time cell with ``[t_a, t_b]``."""
    if not t_b > t_a:
        raise ValueError("empty time window")
    lo = grid.t0 + np.arange(grid.nt) * grid.dt
    ov = np.clip(np.minimum(lo + grid.dt, t_b) - np.maximum(lo, t_a), 0.0, None)
    if not ov.any():
        raise ValueError("empty time window")
    return ov


def weighted_spacetime_integral(f: GridField, w: ExponentialWeight, t_a: float, t_b: float) -> float:
    """Quadrature of ``int_{t_a}^{t_b} int f exp(-lam |x|) dx dt``."""
    tw = time_window_weights(f.grid, t_a, t_b)
    per_slice = np.tensordot(f.values[..., 0] if f.components == 1 else f.magnitude(),
                             w.on_grid(f.grid), axes=f.grid.d)
    return float(np.dot(tw, per_slice) * f.grid.spatial_cell_volume)


# adaptive cell averaging --------------------------------------------------------------

def _gauss_rule(d: int, order: int):
    gx, gw = np.polynomial.legendre.leggauss(order)
    nodes = np.stack(np.meshgrid(*[gx] * d, indexing="ij"), -1).reshape(-1, d) / 2
    wts = np.prod(np.stack(np.meshgrid(*[gw] * d, indexing="ij"), -1).reshape(-1, d), -1) / 2**d
    return nodes, wts


def cell_lp_average(fn, centers: np.ndarray, h: float, p: float, order: int = 3,
                    tol: float = 1e-4, max_depth: int = 10, chunk: int = 8192) -> np.ndarray:
    """``(avg over cube(center, h) of |fn|**p)**(1/p)`` by adaptive Gauss cubature.

    Cells whose one-level bisection changes the estimate by more than ``tol``
    (relative) are split recursively; only cells near singularities recurse.
    """
    centers = np.asarray(centers, float)
    d = centers.shape[1]
    nodes, wts = _gauss_rule(d, order)
    subs = np.stack(np.meshgrid(*[[-0.25, 0.25]] * d, indexing="ij"), -1).reshape(-1, d)

    def gauss(c, hh):
        pts = c[:, None, :] + hh * nodes[None]
        vals = np.abs(np.asarray(fn(pts.reshape(-1, d)), float).reshape(len(c), -1)) ** p
        return vals @ wts

    def adapt(c, hh, est, depth):
        fine = np.stack([gauss(c + s * hh, hh / 2) for s in subs], -1)
        avg = fine.mean(-1)
        bad = np.abs(avg - est) > tol * np.abs(avg)
        if depth == 0 or not bad.any():
            return avg
        idx = np.nonzero(bad)[0]
        parts = [adapt(c[idx] + s * hh, hh / 2, fine[idx, k], depth - 1) for k, s in enumerate(subs)]
        avg[idx] = np.mean(parts, 0)
        return avg

    out = np.empty(len(centers))
    for i in range(0, len(centers), chunk):
        c = centers[i:i + chunk]
        out[i:i + chunk] = adapt(c, h, gauss(c, h), max_depth)
    return out ** (1.0 / p)
