"""Counter-based normal variates keyed by ``(seed, path, step, component)``.

Each variate is a pure function of its key (SplitMix64 finalisers chained
over the key fields), so results do not depend on batching, path order or
thread count.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_SALTS = tuple(np.uint64(s) for s in (0x243F6A8885A308D3, 0x13198A2E03707344, 0xA4093822299F31D0))


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_key(seed: int, path, step, comp) -> np.ndarray:
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, np.uint64) ^ _SALTS[0])
        h = _mix(h ^ np.asarray(path, np.uint64))
        h = _mix(h ^ _SALTS[1] ^ np.asarray(step, np.uint64))
        return _mix(h ^ _SALTS[2] ^ np.asarray(comp, np.uint64))


def uniforms(seed: int, path, step, comp) -> np.ndarray:
    """Uniforms in the open interval (0, 1)."""
    h = hash_key(seed, path, step, comp)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, paths: np.ndarray, step: int, n_comp: int) -> np.ndarray:
    """Standard normals of shape ``(len(paths), n_comp)`` for one step."""
    p = np.asarray(paths, np.uint64)[:, None]
    c = np.arange(n_comp, dtype=np.uint64)[None, :]
    return ndtri(uniforms(seed, p, np.uint64(step), c))


def brownian_increment(seed: int, paths: np.ndarray, step: int, n_comp: int, base_h: float,
                       substeps: int = 1) -> np.ndarray:
    """Increment over ``substeps`` base steps starting at base index ``step * substeps``.

    Coarse increments are sums of the fine ones, so runs at different step
    sizes share one Brownian path.
    """
    acc = normals(seed, paths, step * substeps, n_comp)
    for k in range(1, substeps):
        acc = acc + normals(seed, paths, step * substeps + k, n_comp)
    return np.sqrt(base_h) * acc
