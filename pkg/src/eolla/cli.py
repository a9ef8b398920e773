"""Command line entry point: ``eolla {analytics,simulate,capacity}``."""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

from . import analytics, io
from .capacity import run_seeds, system_capacity
from .config import ConfigError, Scenario, load_scenario
from .sim import simulate

log = logging.getLogger("eolla")


def parse_counts(text: str) -> list[int]:
    """``"1,2,5"`` or ``"1-10"`` (or a mix) to a sorted list of UE counts."""
    counts = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            a = int(lo)
            b = int(hi) if sep else a
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad UE count list {text!r}") from None
        if a < 1 or b < a:
            raise argparse.ArgumentTypeError(f"bad UE count range {part!r}")
        counts.update(range(a, b + 1))
    if not counts:
        raise argparse.ArgumentTypeError("empty UE count list")
    return sorted(counts)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML (or run_metadata.json of an earlier run)")
    common.add_argument("--seed", type=int, help="scenario seed (overrides run.seed)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario key, e.g. la.policy=EOLLA_ALG2 (repeatable)")
    common.add_argument("--out", type=Path, help="output directory (default: run.output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eolla", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analytics", parents=[common], help="closed-form CBG retransmission and RREG grid")
    s = sub.add_parser("simulate", parents=[common], help="one multi-cell simulation run")
    s.add_argument("--ues-per-cell", type=int, help="UEs per cell (overrides run.ues_per_cell)")
    s.add_argument("--trace", action="store_true", help="also write packet and HARQ traces")
    c = sub.add_parser("capacity", parents=[common], help="satisfied-UE curve and capacity over loads")
    c.add_argument("--ues-per-cell", type=parse_counts, help="loads to sweep, e.g. 1-10 or 2,4,6")
    c.add_argument("--workers", type=int, help="parallel worker processes")
    return p


def resolve_scenario(args) -> Scenario:
    sc = load_scenario(args.config) if args.config else Scenario()
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.command == "simulate" and args.ues_per_cell is not None:
        overrides.append(f"run.ues_per_cell={args.ues_per_cell}")
    if args.command == "capacity":
        if args.ues_per_cell is not None:
            overrides.append(f"capacity.ue_counts={args.ues_per_cell}")
        if args.workers is not None:
            overrides.append(f"capacity.workers={args.workers}")
    return sc.with_overrides(overrides) if overrides else sc


@contextmanager
def staged_output(out: Path):
    """Write into a scratch directory next to ``out``; move files over on
    success, discard everything on failure."""
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
    try:
        yield tmp
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(tmp.iterdir()):
            f.replace(out / f.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def cmd_analytics(sc: Scenario, out: Path) -> None:
    a = sc.analytics
    rows = analytics.sweep(
        a.p_tb_values, a.m_values, analytics.EfficiencyInputs(a.xi_cbg, a.xi_tb),
        analytics.residual_factor(a.residual_factor),
    )
    io.write_analytics(out, rows)
    io.write_metadata(out, sc, "analytics", [])


def cmd_simulate(sc: Scenario, out: Path, trace: bool) -> None:
    result = simulate(sc, trace=trace)
    io.write_simulation(out, result, sc.traffic.reliability, packets=trace, harq=trace)
    total = result.total_kpi()
    log.info("%d packets, %d on time, mean PRB load %.3f", total.packets_total, total.packets_on_time,
             result.mean_prb_load())
    io.write_metadata(out, sc, "simulate", [sc.run.seed], extra={
        "mean_prb_load": result.mean_prb_load(),
        "mean_mcs": result.mean_mcs(),
        "cbger_first_tx": total.cbger_first_tx,
        "tber_first_tx": total.tber_first_tx,
        "residual_tber_second_tx": total.residual_tber_second_tx,
    })


def cmd_capacity(sc: Scenario, out: Path) -> None:
    res = system_capacity(sc)
    io.write_capacity(out, res.curve)
    runs = sc.capacity.runs or sc.run.runs
    log.info("capacity %d UEs/cell", res.capacity)
    io.write_metadata(out, sc, "capacity", run_seeds(sc.run.seed, runs), extra={
        "capacity_ues_per_cell": res.capacity,
        "satisfied_fraction_threshold": res.threshold,
    })


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        sc = resolve_scenario(args)
        out = args.out or Path(sc.run.output_dir)
        with staged_output(out) as tmp:
            if args.command == "analytics":
                cmd_analytics(sc, tmp)
            elif args.command == "simulate":
                cmd_simulate(sc, tmp, args.trace)
            else:
                cmd_capacity(sc, tmp)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"eolla: error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0
