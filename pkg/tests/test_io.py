from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import bump
from pmed.config import RunConfig, parse_config, serialize_config
from pmed.errors import SnapshotError, ValidationError
from pmed.functionals import DiagnosticsRecord, diagnostics_record
from pmed.grid import DensityField, Grid, ScalarField, box_grid
from pmed.ledger import read_diagnostics, render_diagnostics, write_diagnostics
from pmed.snapshot import decode_snapshot, encode_snapshot, read_snapshot, write_snapshot


# --- snapshots ---------------------------------------------------------------


@given(
    st.sampled_from([1, 2]),
    st.floats(-1e300, 1e300),
    st.integers(0, 2**32 - 1),
    st.booleans(),
)
def test_snapshot_round_trip_bit_exact(d, time, seed, density):
    rng = np.random.default_rng(seed)
    cells = tuple(int(c) for c in rng.integers(4, 9, d))
    grid = Grid(d, cells, tuple(rng.normal(size=d)), tuple(rng.uniform(0.01, 2, d)))
    vals = rng.uniform(0, 1, cells) if density else rng.normal(size=cells) * 10.0 ** rng.integers(-300, 300)
    f = (DensityField if density else ScalarField)(grid, vals, time)
    g = decode_snapshot(encode_snapshot(f))
    assert type(g) is type(f)
    assert g.grid == f.grid
    assert g.time == f.time
    assert g.values.tobytes() == f.values.tobytes()


def test_snapshot_file_round_trip(tmp_path, box2d):
    f = bump(box2d)
    f = DensityField(f.grid, f.values, 0.30000000000000004)
    g = read_snapshot(write_snapshot(f, tmp_path / "a.snap"))
    assert g.time == f.time and np.array_equal(g.values, f.values)
    assert (tmp_path / "a.snap").read_bytes() == encode_snapshot(g)


def test_snapshot_layout_little_endian(unit_1d):
    f = ScalarField(unit_1d, np.arange(8.0), 2.5)
    data = encode_snapshot(f)
    assert data[:4] == b"PMED"
    assert struct.unpack_from("<I", data, 4)[0] == 1
    assert data[8] == 1 and data[9] == 1
    assert len(data) == 12 + 8 + 8 + 8 + 16 + 64
    assert np.frombuffer(data[-64:], "<f8").tolist() == list(range(8))


def test_snapshot_bad_magic_offset_zero(unit_1d):
    data = bytearray(encode_snapshot(ScalarField(unit_1d, np.ones(8))))
    data[0:4] = b"XMED"
    with pytest.raises(SnapshotError, match="offset 0") as info:
        decode_snapshot(bytes(data))
    assert info.value.offset == 0


def test_snapshot_future_version(unit_1d):
    data = bytearray(encode_snapshot(ScalarField(unit_1d, np.ones(8))))
    struct.pack_into("<I", data, 4, 2)
    with pytest.raises(SnapshotError, match="unsupported version"):
        decode_snapshot(bytes(data))


def test_snapshot_truncation_and_trailing(unit_1d):
    data = encode_snapshot(ScalarField(unit_1d, np.ones(8)))
    for cut in (3, 10, 20, len(data) - 1):
        with pytest.raises(SnapshotError, match="truncated|bad magic"):
            decode_snapshot(data[:cut])
    with pytest.raises(SnapshotError, match="trailing"):
        decode_snapshot(data + b"\0")


def test_snapshot_missing_file(tmp_path):
    with pytest.raises(SnapshotError, match="cannot read"):
        read_snapshot(tmp_path / "nope.snap")


# --- diagnostics ledger ------------------------------------------------------


def record(t=0.1):
    g = box_grid(1, 32, 2.0)
    return diagnostics_record(DensityField(g, bump(g).values, t), 2.0, 2.0, 2.0, tracked_q=(3.0,))


def test_single_row_ledger(tmp_path):
    path = write_diagnostics([record()], tmp_path / "l.csv", "m = 2.0\nd = 1")
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# m = 2.0", "# d = 1"]
    assert len(lines) == 2 + 1 + 1
    comments, header, rows = read_diagnostics(path)
    assert comments == ["m = 2.0", "d = 1"]
    assert len(rows) == 1


def test_ledger_fixed_column_order():
    text = render_diagnostics([record(), record(0.2)])
    header = text.splitlines()[0].split(",")
    assert header[: len(DiagnosticsRecord.COLUMNS)] == list(DiagnosticsRecord.COLUMNS)
    assert header[0] == "time" and header[1] == "mass"
    assert header[len(DiagnosticsRecord.COLUMNS):] == ["int_rho^3"]


def test_ledger_17_digits_round_trip(tmp_path):
    rows = [record(0.1), record(1 / 3)]
    comments, header, back = read_diagnostics(write_diagnostics(rows, tmp_path / "l.csv"))
    for r, b in zip(rows, back):
        for col, v in zip(header, b):
            if col in DiagnosticsRecord.COLUMNS:
                x = getattr(r, col)
                assert v == x or (np.isnan(v) and np.isnan(x))
    assert "0.33333333333333331" in (tmp_path / "l.csv").read_text()


def test_empty_ledger_rejected(tmp_path):
    with pytest.raises(ValidationError):
        write_diagnostics([], tmp_path / "l.csv")


# --- config ------------------------------------------------------------------

MINIMAL = """\
# smallest useful run
m = 2
d = 1
init = barenblatt(t0=1.0, mass=1.0)
drift = zero
"""


def test_minimal_config_accepted():
    cfg = parse_config(MINIMAL)
    assert cfg.m == 2.0 and cfg.d == 1 and cfg.drift.name == "zero"
    assert cfg.init.kwargs == {"t0": 1.0, "mass": 1.0}


def test_m_below_one_rejected():
    with pytest.raises(ValidationError, match="requires m > 1") as info:
        parse_config("d = 1\nm = 0.8\n")
    assert "line 2" in str(info.value)


def test_p_above_lambda_rejected():
    # q < m, d = 1: lambda_q = 1 + (d(q-1)+q)/(d(m-1)+q) = 1 + 2/2.5 = 1.8 < 2.5
    with pytest.raises(ValidationError, match="lambda_q") as info:
        parse_config("m = 2\nq = 1.5\nd = 1\np = 2.5\n")
    assert "line 4" in str(info.value)
    assert "1.8" in str(info.value)


@pytest.mark.parametrize(
    "text, line, pattern",
    [
        ("m = 2\nfoo = 1\n", 2, "unknown key"),
        ("m = 2\n\nn = 2.5\n", 3, "n must be an integer"),
        ("m = abc\n", 1, "m must be a real"),
        ("m = 2\nm = 3\n", 2, "duplicate"),
        ("m 2\n", 1, "key = value"),
        ("drift = vortex\n", 1, "unknown drift preset"),
        ("d = 1\ndrift = rotation\n", 2, "requires d = 2"),
    ],
)
def test_config_errors_carry_line_numbers(text, line, pattern):
    with pytest.raises(ValidationError, match=pattern) as info:
        parse_config(text)
    assert f"line {line}" in str(info.value)


def test_config_round_trip():
    text = """
m = 3
q = 2, 4
p = 1.5
T = 0.5
n = 16
d = 2
cells = 64
half_width = 3
drift = constant(c=[0.5, -0.25])
init = gaussian(sigma=0.2)
output_times = 0.1, 0.25
strang = yes
seed = 7
"""
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


@given(
    st.floats(1.01, 5),
    st.floats(0.01, 10),
    st.integers(1, 64),
    st.sampled_from(["zero", "identity(scale=0.5)", "constant(c=[1.5])"]),
)
def test_config_round_trip_property(m, T, n, drift):
    cfg = parse_config(f"m = {m!r}\nT = {T!r}\nn = {n}\nd = 1\np = 1.2\ndrift = {drift}\n")
    assert parse_config(serialize_config(cfg)) == cfg


def test_default_config_is_valid():
    assert RunConfig().validate() == RunConfig()
