import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pqglab.errors import FrameFormatError
from pqglab.frames import (DIAGNOSTIC_COLUMNS, read_diagnostics_csv, read_frame, write_diagnostics_csv,
                           write_frame)
from pqglab.grid import Grid

GRID = Grid(8, 4, 4, 1.0e6, 5.0e5, 1.0e4)


@given(st.integers(0, 2**32 - 1), st.floats(0, 1e9))
def test_round_trip_bit_exact(tmp_path_factory, seed, t):
    r = np.random.default_rng(seed)
    fields = {"pv_anomaly": r.standard_normal(GRID.shape), "q_r": r.random(GRID.shape),
              "lid": r.standard_normal((2, 4, 8)), "special": np.array([np.inf, -0.0, 5e-324, np.nan] * 8).reshape(1, 4, 8)}
    path = tmp_path_factory.mktemp("f") / "a.pqgf"
    write_frame(path, GRID, t, fields)
    fr = read_frame(path)
    assert fr.grid == GRID and fr.t == t and list(fr.fields) == list(fields)
    for k, v in fields.items():
        assert fr.fields[k].tobytes() == np.asarray(v, "<f8").tobytes()


def test_layout_is_little_endian_and_versioned(tmp_path):
    path = tmp_path / "a.pqgf"
    write_frame(path, GRID, 1.5, {"M": np.zeros(GRID.shape)})
    raw = path.read_bytes()
    assert raw[:4] == b"PQGF" and struct.unpack_from("<I", raw, 4)[0] == 1
    bumped = raw[:4] + struct.pack("<I", 2) + raw[8:]
    path.write_bytes(bumped)
    with pytest.raises(FrameFormatError, match="version 2"):
        read_frame(path)


@pytest.mark.parametrize("cut", [2, 10, 40, -8])
def test_truncation_detected(tmp_path, cut):
    path = tmp_path / "a.pqgf"
    write_frame(path, GRID, 0.0, {"M": np.ones(GRID.shape)})
    path.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(FrameFormatError):
        read_frame(path)


def test_trailing_bytes_and_bad_shape(tmp_path):
    path = tmp_path / "a.pqgf"
    write_frame(path, GRID, 0.0, {"M": np.ones(GRID.shape)})
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(FrameFormatError, match="trailing"):
        read_frame(path)
    with pytest.raises(FrameFormatError):
        write_frame(path, GRID, 0.0, {"M": np.ones((5, 4, 7))})


def test_diagnostics_csv_schema(tmp_path):
    rows = [{k: i for k in DIAGNOSTIC_COLUMNS} for i in range(3)]
    write_diagnostics_csv(tmp_path / "d.csv", rows)
    back = read_diagnostics_csv(tmp_path / "d.csv")
    assert len(back) == 3 and tuple(back[0]) == DIAGNOSTIC_COLUMNS
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header.split(",")[:3] == ["step", "t", "energy"]
