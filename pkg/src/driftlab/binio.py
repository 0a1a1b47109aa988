"""Columnar binary dumps for paths, resolvent solutions, and flow tables.

Layout: 4-byte magic, u16 format version, u16 record kind, then a
kind-specific fixed header followed by the payload arrays as little-endian
64-bit floats (flag arrays as bytes).  Strings are u32-length-prefixed
UTF-8.  Everything round-trips bitwise.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import BinaryFormatError
from .flow import FlowTable, NoiseSpec
from .paths import BrownianPath, DyadicGrid
from .zvonkin import PdeGrid, ZvonkinTransform

__all__ = [
    "KIND_PATH",
    "KIND_PDE",
    "KIND_FLOW",
    "dump_path",
    "load_path",
    "dump_transform",
    "load_transform",
    "dump_table",
    "load_table",
    "load",
]

MAGIC = b"RDLB"
VERSION = 1
KIND_PATH = 1
KIND_PDE = 2
KIND_FLOW = 3

Sink = Union[str, Path, BinaryIO]


def _writer(target: Sink):
    if isinstance(target, (str, Path)):
        return open(target, "wb"), True
    return target, False


def _reader(source: Sink):
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    return source, False


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise BinaryFormatError(f"truncated record: wanted {n} bytes, got {len(data)}")
    return data


def _write_str(fh: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh: BinaryIO) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def _write_array(fh: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
    fh.write(arr.tobytes())


def _read_array(fh: BinaryIO, dtype: str) -> np.ndarray:
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = struct.unpack(f"<{ndim}q", _read_exact(fh, 8 * ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = _read_exact(fh, count * np.dtype(dtype).itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _write_preamble(fh: BinaryIO, kind: int) -> None:
    fh.write(struct.pack("<4sHH", MAGIC, VERSION, kind))


def _read_preamble(fh: BinaryIO) -> int:
    magic, version, kind = struct.unpack("<4sHH", _read_exact(fh, 8))
    if magic != MAGIC:
        raise BinaryFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BinaryFormatError(f"unsupported format version {version}")
    if kind not in (KIND_PATH, KIND_PDE, KIND_FLOW):
        raise BinaryFormatError(f"unknown record kind {kind}")
    return kind


def dump_path(path: BrownianPath, target: Sink) -> None:
    fh, owned = _writer(target)
    try:
        _write_preamble(fh, KIND_PATH)
        fh.write(
            struct.pack(
                "<qqdqq",
                path.grid.level,
                path.dim,
                path.grid.horizon,
                path.seed,
                path.trial_index,
            )
        )
        _write_array(fh, path.values, "<f8")
    finally:
        if owned:
            fh.close()


def _load_path(fh: BinaryIO) -> BrownianPath:
    level, dim, horizon, seed, trial = struct.unpack("<qqdqq", _read_exact(fh, 40))
    values = _read_array(fh, "<f8")
    return BrownianPath(
        grid=DyadicGrid(level, horizon), dim=dim, values=values, seed=seed, trial_index=trial
    )


def dump_transform(transform: ZvonkinTransform, target: Sink) -> None:
    fh, owned = _writer(target)
    try:
        _write_preamble(fh, KIND_PDE)
        g = transform.grid
        fh.write(struct.pack("<dqqdd", g.radius, g.nx, g.nt, g.horizon, transform.lam))
        _write_array(fh, transform.U, "<f8")
        _write_array(fh, transform.Ux, "<f8")
    finally:
        if owned:
            fh.close()


def _load_transform(fh: BinaryIO) -> ZvonkinTransform:
    radius, nx, nt, horizon, lam = struct.unpack("<dqqdd", _read_exact(fh, 40))
    grid = PdeGrid(radius=radius, nx=nx, nt=nt, horizon=horizon)
    U = _read_array(fh, "<f8")
    Ux = _read_array(fh, "<f8")
    return ZvonkinTransform(grid=grid, lam=lam, U=U, Ux=Ux)


def dump_table(table: FlowTable, target: Sink) -> None:
    fh, owned = _writer(target)
    try:
        _write_preamble(fh, KIND_FLOW)
        _write_str(fh, table.scheme)
        _write_str(fh, table.drift_name)
        n = table.noise
        fh.write(struct.pack("<qqqqd", n.seed, n.level, n.n_noise, n.trial_offset, n.horizon))
        fh.write(struct.pack("<dd", table.dt, table.radius))
        _write_array(fh, table.s_grid, "<f8")
        _write_array(fh, table.t_grid, "<f8")
        _write_array(fh, table.x_grid, "<f8")
        _write_array(fh, table.values, "<f8")
        _write_array(fh, table.escaped, "u1")
    finally:
        if owned:
            fh.close()


def _load_table(fh: BinaryIO) -> FlowTable:
    scheme = _read_str(fh)
    drift_name = _read_str(fh)
    seed, level, n_noise, offset, horizon = struct.unpack("<qqqqd", _read_exact(fh, 40))
    dt, radius = struct.unpack("<dd", _read_exact(fh, 16))
    noise = NoiseSpec(
        seed=seed, level=level, n_noise=n_noise, trial_offset=offset, horizon=horizon
    )
    return FlowTable(
        s_grid=_read_array(fh, "<f8"),
        t_grid=_read_array(fh, "<f8"),
        x_grid=_read_array(fh, "<f8"),
        values=_read_array(fh, "<f8"),
        escaped=_read_array(fh, "u1").astype(bool),
        scheme=scheme,
        drift_name=drift_name,
        noise=noise,
        dt=dt,
        radius=radius,
    )


_LOADERS = {KIND_PATH: _load_path, KIND_PDE: _load_transform, KIND_FLOW: _load_table}


def load(source: Sink):
    """Read whichever record the stream holds, dispatching on its kind."""
    fh, owned = _reader(source)
    try:
        kind = _read_preamble(fh)
        return _LOADERS[kind](fh)
    finally:
        if owned:
            fh.close()


def _load_expect(source: Sink, kind: int):
    fh, owned = _reader(source)
    try:
        found = _read_preamble(fh)
        if found != kind:
            raise BinaryFormatError(f"expected record kind {kind}, found {found}")
        return _LOADERS[kind](fh)
    finally:
        if owned:
            fh.close()


def load_path(source: Sink) -> BrownianPath:
    return _load_expect(source, KIND_PATH)


def load_transform(source: Sink) -> ZvonkinTransform:
    return _load_expect(source, KIND_PDE)


def load_table(source: Sink) -> FlowTable:
    return _load_expect(source, KIND_FLOW)
