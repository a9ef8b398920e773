import json
import subprocess
import sys

import pytest

from eolla import io
from eolla.cli import main, parse_counts

FAST = ["--set", "run.horizon_ms=300.0", "--set", "run.cells=1"]


def test_parse_counts():
    assert parse_counts("1-3,5") == [1, 2, 3, 5]
    assert parse_counts("4,2,2") == [2, 4]
    for bad in ("", "a", "3-1", "0"):
        with pytest.raises(Exception):
            parse_counts(bad)


def test_analytics_command(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["analytics", "--out", str(out)]) == 0
    rows = io.read_table(out / "analytics.csv")
    assert list(rows[0]) == list(io.ANALYTICS_COLUMNS)
    assert len(rows) == 24
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["command"] == "analytics"
    assert str(out) in capsys.readouterr().out


def test_simulate_outputs_and_replay(tmp_path):
    out = tmp_path / "s"
    args = ["simulate", "--out", str(out), "--seed", "4", "--ues-per-cell", "2", "--trace",
            "--set", "la.policy=EOLLA_ALG2", *FAST]
    assert main(args) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {"kpi_summary.csv", "offset_trace.csv", "mcs_ecdf.csv", "prb_load_ecdf.csv",
                     "packet_trace.csv", "harq_trace.csv", "run_metadata.json"}
    kpi = io.read_table(out / "kpi_summary.csv")
    assert [r["ue_id"] for r in kpi] == ["0-0", "0-1"]
    for r in kpi:
        assert int(r["on_time"]) + int(r["late"]) + int(r["lost"]) == int(r["packets"])
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["seeds"] == [4]
    assert meta["config"]["la"]["step_down_db"] == 0.044
    harq = io.read_table(out / "harq_trace.csv")
    assert all(set(r["pending_bitmap"]) <= {"0", "1"} for r in harq)

    again = tmp_path / "again"
    assert main(["simulate", "--config", str(out / "run_metadata.json"), "--out", str(again), "--trace"]) == 0
    for name in names:
        assert (out / name).read_bytes() == (again / name).read_bytes(), name


def test_capacity_command(tmp_path):
    out = tmp_path / "c"
    args = ["capacity", "--out", str(out), "--ues-per-cell", "1-2", "--set", "capacity.runs=2", *FAST]
    assert main(args) == 0
    rows = io.read_table(out / "capacity_curve.csv")
    assert [int(r["ues_per_cell"]) for r in rows] == [1, 2]
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["seeds"] == [1, 2]
    assert "capacity_ues_per_cell" in meta["results"]


def test_bad_config_leaves_no_output(tmp_path, capsys):
    out = tmp_path / "bad"
    assert main(["simulate", "--out", str(out), "--set", "harq.n_max=5"]) == 1
    assert "harq.n_max" in capsys.readouterr().err
    assert not out.exists()
    assert not list(tmp_path.glob(".bad.partial-*"))


def test_missing_config_file(tmp_path, capsys):
    assert main(["analytics", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("eolla: error:")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eolla", "analytics", "--out", str(tmp_path / "m")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "m" / "analytics.csv").is_file()


def test_write_table_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError):
        io.write_table(tmp_path / "t.csv", ("a", "b"), [(1,)])


def test_write_table_formats(tmp_path):
    p = io.write_table(tmp_path / "t.csv", ("a", "b", "c"), [(True, 0.1, 3)])
    assert p.read_text() == "a,b,c\n1,0.1,3\n"
