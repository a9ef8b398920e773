"""Slot-level downlink engine.

One run is a single-threaded, deterministic loop over slots. Cells are
coupled only through their SINR statistics, so each cell is simulated on its
own and the results are merged.

Per slot the order of work is fixed:

1. HARQ feedback due by the slot start is applied (offset update, bit
   credit, retransmission eligibility);
2. packets whose (jittered) arrival time has passed join their UE's queue,
   and queued packets that can no longer meet their deadline are expired;
3. on downlink slots, retransmissions are scheduled first and then new data,
   each in proportional-fair order.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import link_adaptation as la
from .config import Scenario
from .harq import (
    HarqProcess,
    draw_outcome,
    prbs_for_bits,
    residual_failure,
    retransmission_payload,
    segment,
)
from .link_adaptation import OllaState, Policy
from .phy import ChannelState, LinkModel, McsTable, cqi_trace, sinr_trace
from .rng import stream, ue_label
from .traffic import XrPacket, generate_arrivals

_EPS = 1e-9


class UnknownProcessError(RuntimeError):
    """Feedback referenced a HARQ process the engine does not know."""


@dataclass
class TddPattern:
    kinds: str = "DDDSU"
    slot_duration_ms: float = 0.5
    symbols_per_slot: int = 14

    def __post_init__(self):
        if not self.kinds or set(self.kinds) - set("DSU"):
            raise ValueError(f"TDD pattern must use only D, S and U, got {self.kinds!r}")
        if "D" not in self.kinds or "U" not in self.kinds:
            raise ValueError("TDD pattern needs at least one D and one U slot")

    def kind(self, slot: int) -> str:
        return self.kinds[slot % len(self.kinds)]

    def feedback_slot(self, tx_slot: int, processing_symbols: int) -> int:
        """First uplink slot starting after the UE finished decoding ``tx_slot``."""
        ready = (tx_slot + 1) * self.symbols_per_slot + processing_symbols
        slot = -(-ready // self.symbols_per_slot)
        while self.kind(slot) != "U":
            slot += 1
        return slot

    def feedback_due(self, tx_slot: int, processing_symbols: int) -> float:
        """Time (ms) at which the scheduler can act on the feedback."""
        return (self.feedback_slot(tx_slot, processing_symbols) + 1) * self.slot_duration_ms


@dataclass
class KpiRecord:
    packets_total: int = 0
    packets_on_time: int = 0
    packets_late: int = 0
    packets_lost: int = 0
    delay_samples_ms: list = field(default_factory=list)
    prb_used: int = 0
    mcs_histogram: Counter = field(default_factory=Counter)
    first_tx_count: int = 0
    first_tx_tb_failed: int = 0
    first_tx_cbg_sent: int = 0
    first_tx_cbg_failed: int = 0
    first_tx_nack_fraction: float = 0.0
    second_tx_count: int = 0
    second_tx_failed: int = 0
    second_tx_nack_fraction: float = 0.0

    @property
    def packets_in_flight(self) -> int:
        return self.packets_total - self.packets_on_time - self.packets_late - self.packets_lost

    @property
    def cbger_first_tx(self) -> float:
        """Mean over first transmissions of the failed-CBG fraction F/M."""
        return self.first_tx_nack_fraction / self.first_tx_count if self.first_tx_count else math.nan

    @property
    def tber_first_tx(self) -> float:
        return self.first_tx_tb_failed / self.first_tx_count if self.first_tx_count else math.nan

    @property
    def residual_tber_second_tx(self) -> float:
        """Fraction of TBs still in error after their second transmission."""
        return self.second_tx_failed / self.first_tx_count if self.first_tx_count else math.nan

    def merge(self, other: "KpiRecord") -> "KpiRecord":
        out = KpiRecord()
        for name in (
            "packets_total", "packets_on_time", "packets_late", "packets_lost", "prb_used",
            "first_tx_count", "first_tx_tb_failed", "first_tx_cbg_sent", "first_tx_cbg_failed",
            "first_tx_nack_fraction", "second_tx_count", "second_tx_failed", "second_tx_nack_fraction",
        ):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.delay_samples_ms = self.delay_samples_ms + other.delay_samples_ms
        out.mcs_histogram = self.mcs_histogram + other.mcs_histogram
        return out


def satisfied(kpi: KpiRecord, reliability: float = 0.99) -> bool:
    """True iff strictly more than ``reliability`` of the packets met the PDB."""
    if kpi.packets_total <= 0:
        raise ValueError("KPI record holds no packets")
    return kpi.packets_on_time / kpi.packets_total > reliability


def ecdf(samples) -> list[tuple[float, float]]:
    """Right-continuous empirical CDF as ``(value, P[X <= value])`` pairs."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("eCDF needs at least one sample")
    values, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts) / x.size
    return [(float(v), float(c)) for v, c in zip(values, cum)]


def ecdf_quantile(curve: list[tuple[float, float]], q: float) -> float:
    """Smallest value whose cumulative fraction reaches ``q``."""
    for value, frac in curve:
        if frac >= q - 1e-12:
            return value
    return curve[-1][0]


@dataclass(eq=False)
class UeContext:
    ue_id: str
    index: int
    cell_id: int
    channel: ChannelState
    olla: OllaState
    sinr: list
    cqi: list
    packets: list
    rng: np.random.Generator
    n_processes: int
    queue: list = field(default_factory=list)
    processes: dict = field(default_factory=dict)
    retx_ready: list = field(default_factory=list)
    free_ids: list = field(default_factory=list)
    avg_throughput: float = 1.0
    kpi: KpiRecord = field(default_factory=KpiRecord)
    next_arrival: int = 0

    def __post_init__(self):
        self.free_ids = list(range(self.n_processes))

    def head_packet(self) -> XrPacket | None:
        for p in self.queue:
            if p.status is None and p.unscheduled_bits > 0:
                return p
        return None


@dataclass
class CellResult:
    cell_id: int
    ues: list
    prb_load: list
    mcs_samples: list
    offset_trace: list
    slots_run: int
    harq_log: list | None = None


@dataclass
class SimulationResult:
    """Outcome of one run: per-UE KPI records and cell-level samples."""

    seed: int
    cells: list

    @property
    def ue_kpis(self) -> dict[str, KpiRecord]:
        return {ue.ue_id: ue.kpi for cell in self.cells for ue in cell.ues}

    @property
    def prb_load(self) -> list[float]:
        return [x for cell in self.cells for x in cell.prb_load]

    @property
    def mcs_samples(self) -> list[int]:
        return [x for cell in self.cells for x in cell.mcs_samples]

    @property
    def offset_trace(self) -> list[tuple[float, str, float]]:
        return sorted((row for cell in self.cells for row in cell.offset_trace), key=lambda r: (r[0], r[1]))

    def total_kpi(self) -> KpiRecord:
        out = KpiRecord()
        for kpi in self.ue_kpis.values():
            out = out.merge(kpi)
        return out

    def satisfied_flags(self, reliability: float) -> dict[str, bool]:
        return {uid: (k.packets_total > 0 and satisfied(k, reliability)) for uid, k in self.ue_kpis.items()}

    def mean_prb_load(self) -> float:
        load = self.prb_load
        return float(np.mean(load)) if load else 0.0

    def mean_mcs(self) -> float:
        mcs = self.mcs_samples
        return float(np.mean(mcs)) if mcs else math.nan


class CellSimulator:
    """Slot engine for one cell and its UEs."""

    def __init__(self, scenario: Scenario, cell_id: int, n_ues: int, seed: int, trace: bool = False):
        sc = scenario
        self.scenario = sc
        self.cell_id = cell_id
        self.seed = seed
        car = sc.carrier
        self.tdd = TddPattern(car.tdd_pattern, car.slot_ms, car.symbols_per_slot)
        self.slot_ms = car.slot_ms
        self.n_prb = car.n_prb
        re_per_prb = car.subcarriers_per_prb * (car.symbols_per_slot - car.control_symbols)
        self.table = sc.mcs_table()
        self.link = LinkModel(self.table, sc.link.curve_slope)
        self.bits_per_prb = [re_per_prb * e.spectral_efficiency * car.rank for e in self.table.entries]

        self.policy = Policy(sc.la.policy)
        self.tb_based = sc.tb_based_harq()
        self.n_max = sc.harq.n_max
        self.max_retx = sc.harq.max_retx
        self.combining = sc.harq.combining
        self.processing_symbols = sc.harq.processing_symbols
        self.drop_expired = sc.scheduler.drop_expired
        self.pf_alpha = 1.0 / sc.scheduler.pf_window_slots
        step_down = sc.la.resolved_step_down()
        self.inner_target = la.inner_tber_target(
            self.policy, sc.la.tber_target, sc.la.step_up_db, step_down, self.n_max
        )

        self.horizon_ms = sc.run.horizon_ms
        self.warmup_ms = sc.run.warmup_fraction * sc.run.horizon_ms
        drain_ms = sc.traffic.pdb_ms + 10 * self.slot_ms * len(car.tdd_pattern)
        self.n_slots = int(math.ceil((self.horizon_ms + drain_ms) / self.slot_ms))
        self.traffic_slots = int(math.ceil(self.horizon_ms / self.slot_ms))
        self.due_by_phase = [
            self.tdd.feedback_due(p, self.processing_symbols) for p in range(len(car.tdd_pattern))
        ]

        ch = sc.channel
        period_slots = max(1, int(round(ch.cqi_period_ms / self.slot_ms)))
        delay_slots = max(0, int(round(ch.cqi_delay_ms / self.slot_ms)))
        corr_slots = ch.fading_corr_ms / self.slot_ms
        lo, hi = ch.geometry_db
        self.ues: list[UeContext] = []
        for k in range(n_ues):
            uid = f"{cell_id}-{k}"
            geometry = float(stream(seed, ue_label(cell_id, k, "geometry")).uniform(lo, hi)) if hi > lo else float(lo)
            sinr = sinr_trace(geometry, self.n_slots, ch.fading_std_db, corr_slots,
                              stream(seed, ue_label(cell_id, k, "fading")))
            cqi = cqi_trace(sinr, period_slots, delay_slots, ch.cqi_step_db, ch.cqi_noise_db,
                            stream(seed, ue_label(cell_id, k, "cqi")))
            traffic_rng = stream(seed, ue_label(cell_id, k, "traffic"))
            phase = traffic_rng.uniform(0.0, 1000.0 / sc.traffic.fps) if sc.traffic.random_phase else 0.0
            packets = generate_arrivals(
                uid, sc.traffic.fps, sc.traffic.jitter, sc.traffic.frame_size, self.horizon_ms,
                traffic_rng, pdb=sc.traffic.pdb_ms, start_offset=phase,
            )
            for p in packets:
                p.counted = p.arrival_time >= self.warmup_ms
            olla = OllaState(
                policy=self.policy,
                offset_db=sc.la.initial_offset_db,
                step_up_db=sc.la.step_up_db,
                step_down_db=step_down,
                offset_min_db=sc.la.offset_bounds_db[0],
                offset_max_db=sc.la.offset_bounds_db[1],
            )
            ctx = UeContext(
                ue_id=uid,
                index=k,
                cell_id=cell_id,
                channel=ChannelState(uid, float(sinr[0]), float(cqi[0])),
                olla=olla,
                sinr=sinr.tolist(),
                cqi=cqi.tolist(),
                packets=packets,
                rng=stream(seed, ue_label(cell_id, k, "harq")),
                n_processes=sc.harq.processes,
            )
            ctx.kpi.packets_total = sum(1 for p in packets if p.counted)
            self.ues.append(ctx)

        self.events: list = []
        self.prb_load: list = []
        self.mcs_samples: list = []
        self.offset_trace: list = []
        self.slot_log: list | None = None
        self.harq_log: list | None = [] if trace else None

    # -- event handling -------------------------------------------------

    def _finalize(self, ue: UeContext, pkt: XrPacket, status: str, when: float | None = None) -> None:
        pkt.status = status
        pkt.completed_at = when
        if pkt.counted:
            kpi = ue.kpi
            if status == "on_time":
                kpi.packets_on_time += 1
                kpi.delay_samples_ms.append(when - pkt.arrival_time)
            elif status == "late":
                kpi.packets_late += 1
                if when is not None:
                    kpi.delay_samples_ms.append(when - pkt.arrival_time)
            else:
                kpi.packets_lost += 1

    def _close(self, ue: UeContext, proc: HarqProcess) -> None:
        del ue.processes[proc.process_id]
        heapq.heappush(ue.free_ids, proc.process_id)
        proc.packet.in_flight -= 1

    def _abort_waiting(self, ue: UeContext, pkt: XrPacket) -> None:
        """Drop queued bits and retransmission-eligible processes of ``pkt``."""
        pkt.unscheduled_bits = 0
        keep = []
        for pid in ue.retx_ready:
            proc = ue.processes[pid]
            if proc.packet is pkt:
                self._close(ue, proc)
            else:
                keep.append(pid)
        ue.retx_ready = keep

    def process_feedback(self, ue: UeContext, process_id: int, now: float) -> None:
        proc = ue.processes.get(process_id)
        if proc is None or proc.last_feedback is None:
            raise UnknownProcessError(f"feedback for unknown process {process_id} of UE {ue.ue_id}")
        fb = proc.last_feedback
        old = ue.olla
        ue.olla = la.update(old, fb)
        if ue.olla is not old:
            self.offset_trace.append((now, ue.ue_id, ue.olla.offset_db))

        if proc.tx_times[0] >= self.warmup_ms:
            kpi = ue.kpi
            if fb.tx_index == 1:
                kpi.first_tx_count += 1
                kpi.first_tx_cbg_sent += len(fb.bits)
                kpi.first_tx_cbg_failed += fb.f
                kpi.first_tx_nack_fraction += fb.f / len(fb.bits)
                kpi.first_tx_tb_failed += fb.f > 0
            elif fb.tx_index == 2:
                kpi.second_tx_count += 1
                if fb.f:
                    kpi.second_tx_failed += 1
                    kpi.second_tx_nack_fraction += fb.f / len(fb.bits)

        pkt = proc.packet
        cbg_bits = proc.layout.cbg_bits
        pkt.remaining_bits -= sum(cbg_bits[i] for i in proc.last_tx_cbgs if fb.bits[i])

        if proc.done:
            self._close(ue, proc)
            if pkt.remaining_bits == 0 and pkt.status is None:
                done_at = proc.tx_times[-1] + self.slot_ms
                self._finalize(ue, pkt, "on_time" if done_at <= pkt.deadline + _EPS else "late", done_at)
        elif residual_failure(proc) is not None:
            self._close(ue, proc)
            if pkt.status is None:
                self._finalize(ue, pkt, "lost")
            self._abort_waiting(ue, pkt)
        elif pkt.status is not None or (self.drop_expired and now + self.slot_ms > pkt.deadline + _EPS):
            self._close(ue, proc)
        else:
            ue.retx_ready.append(process_id)

    def _admit_and_expire(self, now: float) -> None:
        slot_end = now + self.slot_ms
        for ue in self.ues:
            pk = ue.packets
            i = ue.next_arrival
            while i < len(pk) and pk[i].arrival_time <= now + _EPS:
                ue.queue.append(pk[i])
                i += 1
            ue.next_arrival = i
            if not ue.queue:
                continue
            keep = []
            for p in ue.queue:
                if p.status is None and self.drop_expired and slot_end > p.deadline + _EPS:
                    self._abort_waiting(ue, p)
                    if p.in_flight == 0:
                        self._finalize(ue, p, "late")
                if p.status is None:
                    keep.append(p)
            ue.queue = keep

    # -- scheduling -----------------------------------------------------

    def run_slot(self, slot: int, now: float) -> list:
        """Schedule one downlink slot; returns ``(ue_id, process_id, tx_index, prbs)`` per transmission."""
        prb_left = self.n_prb
        bpp = self.bits_per_prb
        events = []
        served = {}
        measuring = now >= self.warmup_ms
        phase = slot % len(self.due_by_phase)
        due = (slot - phase) * self.slot_ms + self.due_by_phase[phase]

        cands = []
        for ue in self.ues:
            for pid in ue.retx_ready:
                proc = ue.processes[pid]
                cands.append((-bpp[proc.mcs_index] / ue.avg_throughput, ue.index, pid, ue, proc))
        if cands:
            cands.sort(key=lambda c: c[:3])
            for _, _, pid, ue, proc in cands:
                rate = bpp[proc.mcs_index]
                need = retransmission_payload(proc, rate)
                if need > prb_left:
                    continue
                prb_left -= need
                ue.retx_ready.remove(pid)
                sent_bits = proc.pending_bits
                self._transmit(ue, proc, slot, now, due)
                served[ue.index] = served.get(ue.index, 0) + sent_bits
                ue.kpi.prb_used += need if measuring else 0
                events.append((ue.ue_id, pid, proc.tx_count, need))

        if prb_left > 0:
            cands = []
            target = self.inner_target
            for ue in self.ues:
                if not ue.free_ids:
                    continue
                pkt = ue.head_packet()
                if pkt is None:
                    continue
                eff = ue.cqi[slot] - ue.olla.offset_db
                mcs = max(self.link.highest_feasible_index(eff, target), 0)
                cands.append((-bpp[mcs] / ue.avg_throughput, ue.index, ue, pkt, mcs))
            cands.sort(key=lambda c: c[:2])
            for _, _, ue, pkt, mcs in cands:
                if prb_left == 0:
                    break
                rate = bpp[mcs]
                alloc = min(prbs_for_bits(pkt.unscheduled_bits, rate), prb_left)
                tb_bits = min(pkt.unscheduled_bits, int(alloc * rate))
                if tb_bits <= 0:
                    continue
                layout = segment(tb_bits, self.n_max, tb_based=self.tb_based)
                pid = heapq.heappop(ue.free_ids)
                proc = HarqProcess(pid, ue.ue_id, layout, mcs, packet=pkt, max_retx=self.max_retx)
                proc.first_tx_prbs = alloc
                ue.processes[pid] = proc
                pkt.unscheduled_bits -= tb_bits
                pkt.in_flight += 1
                prb_left -= alloc
                self._transmit(ue, proc, slot, now, due)
                served[ue.index] = served.get(ue.index, 0) + tb_bits
                if measuring:
                    ue.kpi.prb_used += alloc
                    ue.kpi.mcs_histogram[mcs] += 1
                    self.mcs_samples.append(mcs)
                events.append((ue.ue_id, pid, 1, alloc))

        a = self.pf_alpha
        for ue in self.ues:
            ue.avg_throughput = (1.0 - a) * ue.avg_throughput + a * served.get(ue.index, 0)
        if measuring:
            self.prb_load.append((self.n_prb - prb_left) / self.n_prb)
        if self.slot_log is not None:
            self.slot_log.append((slot, events))
        return events

    def _transmit(self, ue: UeContext, proc: HarqProcess, slot: int, now: float, due: float) -> None:
        sinr = ue.sinr[slot]
        pending = tuple(proc.pending_cbgs)
        fb = draw_outcome(proc, sinr, self.link, ue.rng, combining=self.combining)
        if self.harq_log is not None:
            self.harq_log.append((now, ue.ue_id, proc.process_id, fb.tx_index, proc.mcs_index, pending, sinr, fb.bits))
        proc.tx_times.append(now)
        proc.feedback_due = due
        heapq.heappush(self.events, (due, ue.index, proc.process_id))

    # -- main loop ------------------------------------------------------

    def _idle(self) -> bool:
        if self.events:
            return False
        for ue in self.ues:
            if ue.queue or ue.next_arrival < len(ue.packets) or ue.processes:
                return False
        return True

    def run(self) -> CellResult:
        pattern = self.scenario.carrier.tdd_pattern
        period = len(pattern)
        events = self.events
        ues = self.ues
        slot = 0
        for slot in range(self.n_slots):
            now = slot * self.slot_ms
            while events and events[0][0] <= now + _EPS:
                _, idx, pid = heapq.heappop(events)
                self.process_feedback(ues[idx], pid, now)
            self._admit_and_expire(now)
            if pattern[slot % period] == "D":
                self.run_slot(slot, now)
            if slot >= self.traffic_slots and self._idle():
                break
        for ue in ues:
            ue.channel.true_sinr_db = ue.sinr[slot]
            ue.channel.cqi_sinr_db = ue.cqi[slot]
        return CellResult(
            cell_id=self.cell_id,
            ues=ues,
            prb_load=self.prb_load,
            mcs_samples=self.mcs_samples,
            offset_trace=self.offset_trace,
            slots_run=slot + 1,
            harq_log=self.harq_log,
        )


def simulate(
    scenario: Scenario, seed: int | None = None, ues_per_cell: int | None = None, trace: bool = False
) -> SimulationResult:
    """Run every cell of ``scenario`` once. ``trace`` keeps a per-transmission HARQ log."""
    seed = scenario.run.seed if seed is None else seed
    n_ues = scenario.run.ues_per_cell if ues_per_cell is None else ues_per_cell
    cells = [CellSimulator(scenario, c, n_ues, seed, trace=trace).run() for c in range(scenario.run.cells)]
    return SimulationResult(seed=seed, cells=cells)
