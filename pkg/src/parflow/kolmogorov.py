"""Mixed-radix lattices, the lattice Hölder certificate and its check on simulated flows.

Points of the level-``m`` lattice in ``[0, 1]^r`` are ``z^i c_i^{-m}`` with
``z^i = 0..c_i^m``.  A :class:`LatticeField` stores values at the finest level;
coarser levels are strided views, so a point shared by several levels has one
value by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy import special

PAIR_LIMIT = 1_000_000


def radix_exponent(alpha: float, c: int) -> float:
    """``alpha ln 2 / ln c``; exact when ``c`` is a power of two (``c = 4`` gives ``alpha / 2``)."""
    if c < 2:
        raise ValueError("radix must be >= 2")
    if c & (c - 1) == 0:
        return alpha / (c.bit_length() - 1)
    return alpha * math.log(2) / math.log(c)


@dataclass(frozen=True)
class MixedRadixLattice:
    c: tuple
    depth: int

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(int(v) for v in self.c))
        if not self.c or min(self.c) < 2:
            raise ValueError("radices must be integers >= 2")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @property
    def r(self) -> int:
        return len(self.c)

    def shape(self, m: int | None = None) -> tuple:
        m = self.depth if m is None else m
        return tuple(ci**m + 1 for ci in self.c)

    def n_points(self, m: int | None = None) -> int:
        return math.prod(self.shape(m))

    def stride(self, m: int) -> tuple:
        if not 0 <= m <= self.depth:
            raise ValueError(f"level {m} outside 0..{self.depth}")
        return tuple(ci ** (self.depth - m) for ci in self.c)

    def coords(self, m: int | None = None) -> list:
        m = self.depth if m is None else m
        return [np.arange(ci**m + 1) / ci**m for ci in self.c]

    def spacing(self, m: int) -> np.ndarray:
        return np.array([float(ci) ** -m for ci in self.c])


@dataclass
class LatticeField:
    """Real (or vector, trailing axis) values on the finest lattice level."""

    lattice: MixedRadixLattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        shp = self.lattice.shape()
        if self.values.shape[: len(shp)] != shp or self.values.ndim > len(shp) + 1:
            raise ValueError(f"values must have shape {shp} (+ optional component axis)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("lattice values must be finite")

    @classmethod
    def from_function(cls, lattice: MixedRadixLattice, fn: Callable) -> "LatticeField":
        mesh = np.meshgrid(*lattice.coords(), indexing="ij")
        vals = np.asarray(fn(*mesh), float)
        if vals.ndim <= lattice.r:
            vals = np.broadcast_to(vals, lattice.shape()).copy()
        return cls(lattice, vals)

    @property
    def m_max(self) -> int:
        return self.lattice.depth

    @property
    def vector(self) -> bool:
        return self.values.ndim == self.lattice.r + 1

    def level(self, m: int) -> np.ndarray:
        return self.values[tuple(slice(None, None, s) for s in self.lattice.stride(m))]

    def value_at(self, idx, m: int):
        st = self.lattice.stride(m)
        return self.values[tuple(int(i) * s for i, s in zip(idx, st))]

    def norm(self, diff: np.ndarray) -> np.ndarray:
        return np.sqrt((diff**2).sum(-1)) if self.vector else np.abs(diff)


def _shift_pair(V: np.ndarray, offset: tuple):
    """Views ``(A, B)`` with ``B[j] = V[j + offset]`` over all valid ``j``."""
    a, b = [], []
    for o, n in zip(offset, V.shape):
        a.append(slice(max(0, -o), n - max(0, o)))
        b.append(slice(max(0, o), n + min(0, o)))
    return V[tuple(a)], V[tuple(b)]


def _max_increment(V: np.ndarray, offset: tuple, norm) -> tuple:
    A, B = _shift_pair(V, offset)
    if A.size == 0:
        return 0.0, None
    D = norm(B - A)
    k = int(np.argmax(D))
    return float(D.flat[k]), np.unravel_index(k, D.shape)


@dataclass
class IncrementResult:
    n_star: int | None
    level_max: list
    thresholds: list
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return self.n_star is not None

    def as_dict(self) -> dict:
        return {"n_star": self.n_star, "ok": self.ok, "level_max": self.level_max, "thresholds": self.thresholds,
                "witness": self.witness}


def increment_condition_level(u: LatticeField, alpha: float, rtol: float = 1e-12) -> IncrementResult:
    """Smallest ``n`` with axis-neighbour increments ``<= 2^{-m alpha}`` at every level ``n <= m <= m_max``."""
    if u.m_max < 2:
        raise ValueError("need lattice depth m_max >= 2")
    lat = u.lattice
    holds, level_max, thr, wit = [], [], [], []
    for m in range(u.m_max + 1):
        V = u.level(m)
        best, where = 0.0, None
        for i in range(lat.r):
            off = tuple(1 if j == i else 0 for j in range(lat.r))
            val, pos = _max_increment(V, off, u.norm)
            if val > best or where is None:
                best, where = val, (i, pos)
        bound = 2.0 ** (-m * alpha)
        level_max.append(best)
        thr.append(bound)
        holds.append(best <= bound * (1 + rtol))
        wit.append(where)
    if not holds[-1]:
        m = u.m_max
        i, pos = wit[-1]
        z1 = tuple(int(p) for p in pos)
        z2 = tuple(p + (1 if j == i else 0) for j, p in enumerate(z1))
        h = lat.spacing(m)
        return IncrementResult(None, level_max, thr, {
            "level": m, "axis": i, "z1": [a * s for a, s in zip(z1, h)], "z2": [a * s for a, s in zip(z2, h)],
            "increment": level_max[-1], "bound": thr[-1]})
    n = u.m_max
    while n > 0 and holds[n - 1]:
        n -= 1
    return IncrementResult(n, level_max, thr)


@dataclass
class HolderCertificate:
    alpha: float
    n_star: int
    alpha_i: list
    N_measured: float
    mode: str
    n_pairs: int
    validity_box: list
    witness: dict | None = None
    rescaling: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "n_star": self.n_star, "alpha_i": self.alpha_i, "N_measured": self.N_measured,
                "mode": self.mode, "n_pairs": self.n_pairs, "validity_box": self.validity_box,
                "witness": self.witness, "rescaling": self.rescaling}


def holder_certificate(u: LatticeField, alpha: float, n_star: int, max_pairs: int = PAIR_LIMIT,
                       n_samples: int = PAIR_LIMIT, seed: int = 0) -> HolderCertificate:
    """``N_measured = max |u(z1) - u(z2)| / max_i |z1^i - z2^i|^{alpha_i}`` over pairs in the validity box.

    Pairs are enumerated exhaustively when there are at most ``max_pairs``;
    otherwise ``n_samples`` seeded uniform pairs are drawn.
    """
    lat = u.lattice
    m = u.m_max
    alpha_i = [radix_exponent(alpha, ci) for ci in lat.c]
    kmax = [ci ** (m - n_star - 1) if m - n_star - 1 >= 0 else 0 for ci in lat.c]
    box = [float(ci) ** (-n_star - 1) for ci in lat.c]
    if max(kmax) == 0:
        raise ValueError(f"no admissible pairs: depth {m} must exceed n_star + 1 = {n_star + 1}")
    shape = lat.shape()
    h = lat.spacing(m)
    offsets = [o for o in itertools.product(*[range(-k, k + 1) for k in kmax]) if o > (0,) * lat.r]
    total = sum(math.prod(n - abs(o) for n, o in zip(shape, off)) for off in offsets) if len(offsets) <= max_pairs \
        else max_pairs + 1
    best, witness = 0.0, None
    if total <= max_pairs:
        mode = "exhaustive"
        for off in offsets:
            A, B = _shift_pair(u.values, off)
            den = max((abs(o) * hi) ** ai for o, hi, ai in zip(off, h, alpha_i))
            D = u.norm(B - A)
            k = int(np.argmax(D))
            val = float(D.flat[k]) / den
            if val > best:
                best = val
                z1 = np.unravel_index(k, D.shape)
                z1 = tuple(int(p) + max(0, -o) for p, o in zip(z1, off))
                witness = {"z1": [p * s for p, s in zip(z1, h)],
                           "z2": [(p + o) * s for p, o, s in zip(z1, off, h)], "ratio": val}
        n_pairs = total
    else:
        mode = "sampled"
        best, witness = _sampled_N(u, alpha_i, kmax, n_samples, seed)
        n_pairs = n_samples
    return HolderCertificate(alpha, n_star, alpha_i, best, mode, int(n_pairs), box, witness)


def _sampled_N(u: LatticeField, alpha_i, kmax, n_samples: int, seed: int, chunk: int = 200_000):
    lat = u.lattice
    shape = lat.shape()
    h = lat.spacing(u.m_max)
    rng = np.random.default_rng(seed)
    best, witness = 0.0, None
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        off = np.stack([rng.integers(-k, k + 1, size=n) for k in kmax], -1)
        zero = ~off.any(-1)
        off[zero, 0] = 1 if kmax[0] > 0 else 0
        if kmax[0] == 0:
            j = int(np.argmax(kmax))
            off[zero, j] = 1
        lo = np.maximum(0, -off)
        hi = np.minimum(np.array(shape) - 1, np.array(shape) - 1 - off)
        z1 = lo + np.floor(rng.random((n, lat.r)) * (hi - lo + 1)).astype(int)
        z2 = z1 + off
        D = u.norm(u.values[tuple(z2.T)] - u.values[tuple(z1.T)])
        den = np.max((np.abs(off) * h) ** np.array(alpha_i), -1)
        ratio = D / den
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            witness = {"z1": (z1[k] * h).tolist(), "z2": (z2[k] * h).tolist(), "ratio": best}
        done += n
    return best, witness


def recheck_certificate(u: LatticeField, cert: HolderCertificate, n_samples: int = 100_000, seed: int = 1) -> float:
    """``N`` over a fresh seeded pair sample from the certificate's validity box."""
    kmax = [ci ** (u.m_max - cert.n_star - 1) for ci in u.lattice.c]
    return _sampled_N(u, cert.alpha_i, kmax, n_samples, seed)[0]


def _truncate(q: float, c: int, m: int) -> int:
    x = q * c**m
    k = round(x)
    return int(k) if abs(x - k) <= 1e-9 * max(1.0, abs(x)) else int(math.floor(x))


def continuity_extension(u: LatticeField, query, depth: int):
    """Value at the depth-``depth`` radix truncation ``z_m`` of ``query``."""
    q = np.atleast_1d(np.asarray(query, float))
    if q.shape != (u.lattice.r,):
        raise ValueError(f"query must have {u.lattice.r} coordinates")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("query outside [0, 1]^r")
    if not 0 <= depth <= u.m_max:
        raise ValueError(f"depth must lie in 0..{u.m_max}")
    idx = [_truncate(float(qi), ci, depth) for qi, ci in zip(q, u.lattice.c)]
    return u.value_at(idx, depth)


def extension_sequence(u: LatticeField, query, N: float, alpha: float, start: int = 0) -> dict:
    """Truncation values over depths with the Cauchy-rate bound ``N 2^{-m alpha} 2 r max c``."""
    vals = [continuity_extension(u, query, m) for m in range(start, u.m_max + 1)]
    diffs = [float(np.linalg.norm(np.subtract(vals[k + 1], vals[k]))) for k in range(len(vals) - 1)]
    const = 2 * u.lattice.r * max(u.lattice.c)
    bounds = [N * 2.0 ** (-(start + k) * alpha) * const for k in range(len(diffs))]
    return {"values": [np.asarray(v).tolist() for v in vals], "diffs": diffs, "bounds": bounds,
            "within": all(dv <= b * (1 + 1e-12) for dv, b in zip(diffs, bounds))}


# flows on the parabolic lattice ------------------------------------------------------

@dataclass
class FlowLattice:
    """Realisations ``u(t, x)`` on the ``(4, 2, ..., 2)`` lattice of ``[0, T] x [lo, lo + L]^d``.

    ``batches`` yields arrays of shape ``(m, 4^depth + 1, (2^depth + 1,)*d, k)``.
    """

    d: int
    depth: int
    T: float
    lo: float
    L: float
    M: int
    batches: Callable[[], Iterator[np.ndarray]]
    label: str = "custom"

    @property
    def lattice(self) -> MixedRadixLattice:
        return MixedRadixLattice((4,) + (2,) * self.d, self.depth)

    @classmethod
    def from_array(cls, values: np.ndarray, d: int, T: float = 1.0, lo: float = 0.0, L: float = 1.0,
                   label: str = "array") -> "FlowLattice":
        values = np.asarray(values, float)
        depth = int(round(math.log2(values.shape[2] - 1)))
        return cls(d, depth, T, lo, L, values.shape[0], lambda: iter([values]), label)

    @classmethod
    def simulate(cls, coeffs, depth: int, M: int, seed: int, T: float = 1.0, lo: float = 0.0, L: float = 1.0,
                 substeps: int = 1, batch: int = 16, t: float = 0.0) -> "FlowLattice":
        """``x_s(t, x)`` from every spatial lattice point with shared noise per path."""
        from .sde.flow import euler_maruyama

        d = coeffs.d
        nt = 4**depth
        h = T / (nt * substeps)
        g = np.arange(2**depth + 1) * (L / 2**depth) + lo
        xs = np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)

        def gen():
            for start in range(0, M, batch):
                m = min(batch, M - start)
                res = euler_maruyama(coeffs, t, xs, None, T, h, m, seed, path_offset=start,
                                     record_every=substeps, track_sup=False)
                arr = np.stack([r[1] for r in res.records], 1)
                yield arr.reshape((m, nt + 1) + (2**depth + 1,) * d + (d,))

        return cls(d, depth, T, lo, L, M, gen, coeffs.name)


def gaussian_abs_moment(d: int, gamma: float) -> float:
    """``E|Z|^gamma`` for a standard normal vector in ``R^d``."""
    return 2 ** (gamma / 2) * math.exp(special.gammaln((d + gamma) / 2) - special.gammaln(d / 2))


def flow_holder_check(fl: FlowLattice, alpha: float, gamma: float, kappa: float, K: float | str = 1.0,
                      n_sup_times: int = 17) -> dict:
    """Hypothesis moments, per-realisation modulus and the ``P(A_n^c)`` curve on a flow lattice.

    Times are rescaled by ``T`` and space by ``L`` into ``[0, 1]^{d+1}``; the
    spatial modulus is reported in physical units.  The events ``A_n`` are
    evaluated for ``u / K``; ``K = "fitted"`` uses the larger fitted constant.
    """
    d, depth = fl.d, fl.depth
    if depth < 4:
        raise ValueError(f"insufficient lattice depth {depth} (need >= 4 levels)")
    if not kappa > (d + 2) / 2:
        raise ValueError(f"need kappa > (d + 2) / 2 = {(d + 2) / 2}")
    if not gamma >= 2 * kappa:
        raise ValueError(f"need gamma >= 2 * kappa ({gamma} < {2 * kappa})")
    bound = 1 - (d + 2) / (2 * kappa)
    if not 0 < alpha < bound:
        raise ValueError(f"need 0 < alpha < 1 - (d + 2) / (2 kappa) = {bound}")
    nt = 4**depth
    t_sub = np.unique(np.linspace(0, nt, n_sup_times).round().astype(int))
    g = np.arange(2**depth + 1) / 2**depth
    pts = np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)
    iu = np.triu_indices(len(pts), 1)
    dist = np.sqrt(((pts[iu[0]] - pts[iu[1]]) ** 2).sum(-1))
    time_sum = np.zeros(depth)
    time_cnt = np.zeros(depth)
    sup_acc = np.zeros(len(t_sub))
    inc_t, inc_s, inc_axis, mod_space = [], [], [], []
    space_offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if o > (0,) * d]
    axis_offsets = [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]
    M = 0
    for arr in fl.batches():
        m_b = arr.shape[0]
        M += m_b
        nrm = lambda D: np.sqrt((D**2).sum(-1))
        for lvl in range(1, depth + 1):
            s = 4 ** (depth - lvl)
            D = nrm(arr[:, s:] - arr[:, :-s])
            time_sum[lvl - 1] += (D**gamma).sum()
            time_cnt[lvl - 1] += D.size
        for j, ti in enumerate(t_sub):
            U = arr[:, ti].reshape(m_b, -1, d)
            R = nrm(U[:, iu[0]] - U[:, iu[1]]) ** (2 * kappa) / dist ** (2 * kappa - d)
            sup_acc[j] += R.max(1).sum()
        it = np.zeros((m_b, depth + 1))
        isp = np.zeros((m_b, depth + 1))
        iax = np.zeros((m_b, depth + 1))
        ms = np.zeros(m_b)
        for lvl in range(depth + 1):
            st = 4 ** (depth - lvl)
            ss = 2 ** (depth - lvl)
            V = arr[(slice(None), slice(None, None, st)) + (slice(None, None, ss),) * d]
            it[:, lvl] = nrm(V[:, 1:] - V[:, :-1]).reshape(m_b, -1).max(1)
            for off in space_offsets:
                A, B = _shift_pair(V, (0, 0) + off + (0,))
                inc = nrm(B - A).reshape(m_b, -1).max(1)
                isp[:, lvl] = np.maximum(isp[:, lvl], inc)
                dphys = fl.L * 2.0**-lvl * math.sqrt(sum(o * o for o in off))
                ms = np.maximum(ms, inc / dphys)
                if off in axis_offsets:
                    iax[:, lvl] = np.maximum(iax[:, lvl], inc)
        inc_t.append(it)
        inc_s.append(isp)
        inc_axis.append(iax)
        mod_space.append(ms)
    it, isp, iax, ms = (np.concatenate(v) for v in (inc_t, inc_s, inc_axis, mod_space))
    tau = 4.0 ** -np.arange(1, depth + 1)
    time_moment = time_sum / time_cnt
    K_time_levels = time_moment ** (1 / gamma) / np.sqrt(tau)
    K_time = float(K_time_levels.max())
    sup_moment = sup_acc / M
    K_space = float(sup_moment.max() ** (1 / (2 * kappa)))
    K_used = max(K_time, K_space) if K == "fitted" else float(K)
    thr = 2.0 ** (-np.arange(depth + 1) * alpha)
    ok = (it <= K_used * thr) & (isp <= K_used * thr)
    # minimal n per realisation; depth + 1 marks failure at the finest level
    n_min = np.full(M, depth + 1)
    for n in range(depth, -1, -1):
        good = ok[:, n:].all(1)
        n_min[good] = n
    p_fail = [float(np.mean(n_min > n)) for n in range(depth + 1)]
    modulus = (np.maximum(it, isp) / thr).max(1) / K_used
    lv = np.arange(depth + 1)
    top = iax.max(0)
    pos = top > 0
    exp_fit = float(np.polyfit(lv[pos] * math.log(2), -np.log(top[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    ref_K_brownian = math.sqrt(fl.T) * gaussian_abs_moment(d, gamma) ** (1 / gamma)
    return {
        "d": d, "depth": depth, "M": M, "alpha": alpha, "gamma": gamma, "kappa": kappa,
        "time_moment": time_moment.tolist(), "K_time": K_time, "K_time_levels": K_time_levels.tolist(),
        "sup_ratio_moment": sup_moment.tolist(), "K_space": K_space, "K": K_used,
        "brownian_K_time_reference": ref_K_brownian,
        "spatial_exponent": exp_fit, "spatial_modulus": float(ms.max()),
        "modulus_median": float(np.median(modulus)), "modulus_max": float(modulus.max()),
        "p_fail": p_fail, "n_min_histogram": np.bincount(n_min, minlength=depth + 2).tolist(),
        "rescaling": {"T": fl.T, "lo": fl.lo, "L": fl.L, "time_exponent_factor": 0.5},
    }
