"""XR system capacity: the largest load at which enough UEs are satisfied."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .config import Scenario
from .sim import simulate


@dataclass(frozen=True)
class LoadPoint:
    ues_per_cell: int
    satisfied_fraction: float
    stderr: float
    n_ues: int
    mean_prb_load: float
    mean_mcs: float


@dataclass(frozen=True)
class CapacityResult:
    capacity: int
    curve: tuple[LoadPoint, ...]
    threshold: float


def _run_load(args) -> tuple[list[bool], list[float], list[float]]:
    scenario, n, seed = args
    res = simulate(scenario, seed=seed, ues_per_cell=n)
    flags = list(res.satisfied_flags(scenario.traffic.reliability).values())
    return flags, [res.mean_prb_load()], [res.mean_mcs()]


def run_seeds(base_seed: int, runs: int) -> list[int]:
    return [base_seed + i for i in range(runs)]


def system_capacity(
    scenario: Scenario,
    ue_counts=None,
    runs_per_count: int | None = None,
    satisfied_fraction: float | None = None,
    workers: int | None = None,
) -> CapacityResult:
    """Sweep UEs per cell; every load point pools the UEs of all runs.

    Capacity is the largest swept load whose pooled satisfied fraction
    reaches the threshold (0 if none does). Run ``i`` uses seed
    ``run.seed + i`` at every load.
    """
    cap = scenario.capacity
    counts = sorted(cap.ue_counts if ue_counts is None else ue_counts)
    runs = runs_per_count or cap.runs or scenario.run.runs
    thr = cap.satisfied_fraction if satisfied_fraction is None else satisfied_fraction
    workers = cap.workers if workers is None else workers
    if not counts or counts[0] < 1:
        raise ValueError("UE counts must be positive")
    if runs < 1:
        raise ValueError("need at least one run per load")
    if not 0.0 < thr <= 1.0:
        raise ValueError(f"satisfied fraction must lie in (0, 1], got {thr!r}")

    jobs = [(scenario, n, seed) for n in counts for seed in run_seeds(scenario.run.seed, runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_load, jobs))
    else:
        outcomes = [_run_load(j) for j in jobs]

    curve = []
    for i, n in enumerate(counts):
        flags, prb, mcs = [], [], []
        for f, p, m in outcomes[i * runs : (i + 1) * runs]:
            flags += f
            prb += p
            mcs += [x for x in m if not math.isnan(x)]
        frac = sum(flags) / len(flags)
        se = math.sqrt(frac * (1.0 - frac) / len(flags))
        curve.append(LoadPoint(n, frac, se, len(flags), sum(prb) / len(prb),
                               sum(mcs) / len(mcs) if mcs else math.nan))
    capacity = max((p.ues_per_cell for p in curve if p.satisfied_fraction >= thr), default=0)
    return CapacityResult(capacity, tuple(curve), thr)
