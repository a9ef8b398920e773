"""CSV and metadata writers. Every table is UTF-8, comma separated, with a header row."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from . import __version__
from .sim import SimulationResult, ecdf, satisfied

KPI_COLUMNS = ("ue_id", "packets", "on_time", "late", "lost", "satisfied")
MCS_ECDF_COLUMNS = ("mcs_index", "cumulative_fraction")
PRB_ECDF_COLUMNS = ("prb_load", "cumulative_fraction")
CAPACITY_COLUMNS = ("ues_per_cell", "satisfied_fraction", "stderr")
OFFSET_COLUMNS = ("time_ms", "ue_id", "offset_db")
ANALYTICS_COLUMNS = ("p_tb", "m", "p_cbg", "r_first", "r_second", "rreg_percent")
PACKET_COLUMNS = ("ue_id", "seq", "arrival_ms", "size_bits", "deadline_ms")
HARQ_COLUMNS = ("time_ms", "ue_id", "process_id", "tx_index", "mcs", "pending_bitmap", "sinr_db", "outcome_bitmap")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"{path.name}: row has {len(row)} fields, expected {len(columns)}")
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _bitmap(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def kpi_rows(result: SimulationResult, reliability: float):
    for uid, k in sorted(result.ue_kpis.items(), key=lambda kv: _ue_sort_key(kv[0])):
        ok = k.packets_total > 0 and satisfied(k, reliability)
        yield uid, k.packets_total, k.packets_on_time, k.packets_late, k.packets_lost, ok


def _ue_sort_key(uid: str):
    cell, _, ue = uid.partition("-")
    return int(cell), int(ue)


def write_simulation(out_dir, result: SimulationResult, reliability: float, packets: bool = False,
                     harq: bool = False) -> list[Path]:
    out = Path(out_dir)
    files = [
        write_table(out / "kpi_summary.csv", KPI_COLUMNS, kpi_rows(result, reliability)),
        write_table(out / "offset_trace.csv", OFFSET_COLUMNS, result.offset_trace),
    ]
    mcs = result.mcs_samples
    files.append(write_table(out / "mcs_ecdf.csv", MCS_ECDF_COLUMNS,
                             [(int(v), c) for v, c in ecdf(mcs)] if mcs else []))
    load = result.prb_load
    files.append(write_table(out / "prb_load_ecdf.csv", PRB_ECDF_COLUMNS, ecdf(load) if load else []))
    if packets:
        rows = (
            (p.ue_id, p.seq, p.arrival_time, p.size_bits, p.deadline)
            for cell in result.cells for ue in cell.ues for p in ue.packets
        )
        files.append(write_table(out / "packet_trace.csv", PACKET_COLUMNS, rows))
    if harq:
        rows = []
        for cell in result.cells:
            for t, uid, pid, tx, m, pending, sinr, outcome in cell.harq_log or ():
                rows.append((t, uid, pid, tx, m, _bitmap(pending), sinr, _bitmap(outcome)))
        rows.sort(key=lambda r: (r[0], _ue_sort_key(r[1]), r[2]))
        files.append(write_table(out / "harq_trace.csv", HARQ_COLUMNS, rows))
    return files


def write_capacity(out_dir, curve) -> Path:
    rows = [(p.ues_per_cell, p.satisfied_fraction, p.stderr) for p in curve]
    return write_table(Path(out_dir) / "capacity_curve.csv", CAPACITY_COLUMNS, rows)


def write_analytics(out_dir, rows) -> Path:
    return write_table(Path(out_dir) / "analytics.csv", ANALYTICS_COLUMNS,
                       ([r[c] for c in ANALYTICS_COLUMNS] for r in rows))


def write_metadata(out_dir, scenario, command: str, seeds, extra: dict | None = None) -> Path:
    """Resolved configuration plus seeds, derived targets and version.

    The ``config`` block can be fed back through ``--config`` to reproduce
    the run.
    """
    meta = {
        "command": command,
        "version": __version__,
        "seeds": list(seeds),
        "derived_targets": scenario.derived_targets(),
        "config": scenario.to_dict(resolve=True),
    }
    if extra:
        meta["results"] = extra
    path = Path(out_dir) / "run_metadata.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
