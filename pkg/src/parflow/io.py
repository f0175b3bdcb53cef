"""PFLD binary container for grid fields (and flow ensembles), plus JSON sidecars.

Layout (little endian)::

    b"PFLD" | version u32 | d u32 | nt u32 | nx u32 | components u32
    | t0 f64 | x0[d] f64 | dt f64 | dx f64 | values f64[nt * nx**d * components]

An optional extension chunk may follow the values: ``b"PATH"`` | version u32
| M u64 | n_records u64 | d u32 | n_dirs u32 | h f64 | T f64 | t f64 |
x paths f64[M * n_records * d] | eta paths f64[M * n_records * d * n_dirs]
| excluded u8[M].
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .grid import GridField, SpaceTimeGrid

MAGIC = b"PFLD"
PATH_MAGIC = b"PATH"
VERSION = 1


def _header(grid: SpaceTimeGrid, components: int) -> bytes:
    head = MAGIC + struct.pack("<5I", VERSION, grid.d, grid.nt, grid.nx, components)
    head += struct.pack("<d", grid.t0) + struct.pack(f"<{grid.d}d", *grid.x0)
    head += struct.pack("<2d", grid.dt, grid.dx)
    return head


def field_to_bytes(f: GridField) -> bytes:
    return _header(f.grid, f.components) + f.values.astype("<f8").tobytes(order="C")


def _read_field(buf: memoryview, off: int = 0):
    if bytes(buf[off:off + 4]) != MAGIC:
        raise ValueError("not a PFLD container (bad magic)")
    off += 4
    version, d, nt, nx, comps = struct.unpack_from("<5I", buf, off)
    if version != VERSION:
        raise ValueError(f"unsupported PFLD version {version}")
    off += 20
    (t0,) = struct.unpack_from("<d", buf, off)
    off += 8
    x0 = struct.unpack_from(f"<{d}d", buf, off)
    off += 8 * d
    dt, dx = struct.unpack_from("<2d", buf, off)
    off += 16
    grid = SpaceTimeGrid(t0, x0, dt, dx, nt, nx, d)
    n = nt * nx**d * comps
    vals = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(float)
    off += 8 * n
    return GridField(grid, vals, comps), off


def field_from_bytes(data: bytes) -> GridField:
    f, _ = _read_field(memoryview(data))
    return f


def sidecar(f: GridField) -> dict:
    g = f.grid
    return {
        "magic": "PFLD",
        "version": VERSION,
        "d": g.d, "nt": g.nt, "nx": g.nx, "components": f.components,
        "t0": g.t0, "x0": list(g.x0), "dt": g.dt, "dx": g.dx,
        "order": "time-major",
        "values": f.values.ravel().tolist(),
    }


def field_from_sidecar(obj: dict) -> GridField:
    grid = SpaceTimeGrid(obj["t0"], tuple(obj["x0"]), obj["dt"], obj["dx"], obj["nt"], obj["nx"], obj["d"])
    return GridField(grid, np.asarray(obj["values"], float), obj["components"])


def save_field(f: GridField, path, with_sidecar: bool = True) -> Path:
    path = Path(path)
    path.write_bytes(field_to_bytes(f))
    if with_sidecar:
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar(f)))
    return path


def load_field(path) -> GridField:
    path = Path(path)
    if path.suffix == ".json":
        return field_from_sidecar(json.loads(path.read_text()))
    return field_from_bytes(path.read_bytes())


# flow ensembles -------------------------------------------------------------------

def ensemble_to_bytes(ens) -> bytes:
    """Serialise a FlowEnsemble: a placeholder carrier field followed by a PATH chunk.

    The carrier is a one-step grid holding the initial point in its first
    component slots, so a plain PFLD reader can still open the file.
    """
    d = ens.x_paths.shape[-1]
    h = max(ens.h, 1e-12)
    carrier_grid = SpaceTimeGrid(ens.t0, tuple(ens.x0), h, math.sqrt(h), 1, 2, d)
    carrier = GridField(carrier_grid, np.zeros(carrier_grid.shape + (1,)), 1)
    M, R, _ = ens.x_paths.shape
    eta = ens.eta_paths
    n_dirs = 0 if eta is None else eta.shape[-1]
    out = bytearray(field_to_bytes(carrier))
    out += PATH_MAGIC + struct.pack("<I2Q2I3d", VERSION, M, R, d, n_dirs, ens.h, ens.T, ens.t0)
    out += np.ascontiguousarray(ens.x_paths, "<f8").tobytes()
    if eta is not None:
        out += np.ascontiguousarray(eta, "<f8").tobytes()
    out += np.asarray(ens.excluded, np.uint8).tobytes()
    return bytes(out)


def ensemble_arrays_from_bytes(data: bytes) -> dict:
    buf = memoryview(data)
    _, off = _read_field(buf)
    if bytes(buf[off:off + 4]) != PATH_MAGIC:
        raise ValueError("PFLD file has no PATH extension chunk")
    off += 4
    version, M, R, d, n_dirs, h, T, t0 = struct.unpack_from("<I2Q2I3d", buf, off)
    off += struct.calcsize("<I2Q2I3d")
    x = np.frombuffer(buf, "<f8", M * R * d, off).reshape(M, R, d).copy()
    off += 8 * M * R * d
    eta = None
    if n_dirs:
        eta = np.frombuffer(buf, "<f8", M * R * d * n_dirs, off).reshape(M, R, d, n_dirs).copy()
        off += 8 * M * R * d * n_dirs
    excluded = np.frombuffer(buf, np.uint8, M, off).astype(bool)
    return {"x_paths": x, "eta_paths": eta, "excluded": excluded, "h": h, "T": T, "t0": t0}
