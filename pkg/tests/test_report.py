import os

import numpy as np
import pytest

from chowfilter.report import (
    aggregate,
    atomic_write,
    format_cell,
    read_table,
    write_series,
    write_table,
)


def test_format_cell():
    assert format_cell(None) == "NA"
    assert format_cell(0.25) == "0.25"
    assert format_cell(3) == "3"
    assert format_cell("ok") == "ok"


def test_table_roundtrip(tmp_path):
    path = str(tmp_path / "t.tsv")
    rows = [{"a": 1, "b": 0.5}, {"a": 2, "b": None}]
    write_table(path, ["a", "b"], rows)
    back = read_table(path)
    assert back == [{"a": "1", "b": "0.5"}, {"a": "2", "b": "NA"}]


def test_atomic_write_no_partial_on_failure(tmp_path):
    path = str(tmp_path / "out.txt")
    atomic_write(path, "first")

    # a failure mid-write must not clobber the existing file
    with pytest.raises(TypeError):
        atomic_write(path, 123)  # not a string: write() raises
    assert open(path).read() == "first"
    leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]
    assert leftovers == []


def test_write_series(tmp_path):
    path = str(tmp_path / "s.dat")
    write_series(path, [0, 1, 2], [0.5, 0.25, 0.125])
    lines = open(path).read().strip().splitlines()
    assert lines[0].split("\t") == ["0", "0.5"]
    assert len(lines) == 3


def test_aggregate_mean_std_and_order():
    rows = [
        {"eta": "0.5", "seed": 1, "m": 2.0, "status": "ok"},
        {"eta": "0.5", "seed": 2, "m": 4.0, "status": "ok"},
        {"eta": "0.3", "seed": 1, "m": 1.0, "status": "ok"},
        {"eta": "0.3", "seed": 2, "m": None, "status": "solver: x"},
    ]
    agg = aggregate(rows, ["eta"], ["m"])
    assert [cell["eta"] for cell in agg] == ["0.3", "0.5"]
    assert agg[1]["m_mean"] == pytest.approx(3.0)
    assert agg[1]["m_std"] == pytest.approx(1.0)
    assert agg[0]["n_failed"] == 1
    assert agg[0]["m_mean"] == pytest.approx(1.0)


def test_aggregate_deterministic():
    rng = np.random.default_rng(0)
    rows = [
        {"g": str(rng.integers(0, 3)), "v": float(rng.normal()), "status": "ok"}
        for _ in range(20)
    ]
    a1 = aggregate(rows, ["g"], ["v"])
    a2 = aggregate(list(reversed(rows)), ["g"], ["v"])
    assert a1 == a2
