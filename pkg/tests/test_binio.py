"""Round-trips and corruption handling for the columnar binary dumps."""

import io

import numpy as np
import pytest

from driftlab import binio, drifts
from driftlab.errors import BinaryFormatError
from driftlab.flow import NoiseSpec, simulate_flow
from driftlab.paths import sample_path
from driftlab.zvonkin import PdeGrid, find_lambda

SEED = 20260821


def test_path_roundtrip(tmp_path):
    path = sample_path(level=7, dim=2, seed=SEED, trial_index=5)
    target = tmp_path / "w.rdlb"
    binio.dump_path(path, target)
    back = binio.load_path(target)
    assert np.array_equal(back.values, path.values)
    assert back.grid == path.grid
    assert (back.dim, back.seed, back.trial_index) == (2, SEED, 5)


def test_transform_roundtrip():
    spec = drifts.sine_drift()
    tr = find_lambda(spec, PdeGrid(radius=6.0, nx=64, nt=64))
    buf = io.BytesIO()
    binio.dump_transform(tr, buf)
    buf.seek(0)
    back = binio.load_transform(buf)
    assert back.grid == tr.grid
    assert back.lam == tr.lam
    assert np.array_equal(back.U, tr.U)
    assert np.array_equal(back.Ux, tr.Ux)


def test_flow_table_roundtrip(tmp_path):
    spec = drifts.sine_drift()
    table = simulate_flow(
        spec,
        NoiseSpec(seed=SEED, level=6, n_noise=1),
        s_grid=(0.0, 0.5),
        t_grid=(0.5, 1.0),
        x_grid=np.linspace(-1.0, 1.0, 9),
        dt=2.0**-6,
    )
    target = tmp_path / "table.rdlb"
    binio.dump_table(table, target)
    back = binio.load_table(target)
    assert np.array_equal(back.values, table.values)
    assert np.array_equal(back.escaped, table.escaped)
    assert back.escaped.dtype == np.bool_
    for name in ("s_grid", "t_grid", "x_grid"):
        assert np.array_equal(getattr(back, name), getattr(table, name))
    assert back.scheme == table.scheme
    assert back.drift_name == table.drift_name
    assert back.noise == table.noise
    assert (back.dt, back.radius) == (table.dt, table.radius)


def test_load_dispatches_on_kind(tmp_path):
    path = sample_path(level=4, seed=1)
    target = tmp_path / "any.rdlb"
    binio.dump_path(path, target)
    loaded = binio.load(target)
    assert np.array_equal(loaded.values, path.values)
    with pytest.raises(BinaryFormatError):
        binio.load_table(target)


def test_corrupt_streams_are_rejected():
    with pytest.raises(BinaryFormatError):
        binio.load(io.BytesIO(b"NOPE" + b"\x00" * 8))
    good = io.BytesIO()
    binio.dump_path(sample_path(level=3, seed=2), good)
    raw = bytearray(good.getvalue())
    raw[4] = 99  # version stamp
    with pytest.raises(BinaryFormatError):
        binio.load(io.BytesIO(bytes(raw)))
    with pytest.raises(BinaryFormatError):
        binio.load(io.BytesIO(good.getvalue()[:20]))
