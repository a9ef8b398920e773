"""Link abstraction: MCS table, SINR-to-TB-error curves, CQI reporting,
chase combining and the per-UE SINR process."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

CB_MAX_BITS = 8448
_LN9 = math.log(9.0)

# NR 256QAM MCS table: (modulation order, code rate x 1024)
_NR_256QAM = [
    (2, 120), (2, 193), (2, 308), (2, 449), (2, 602),
    (4, 378), (4, 434), (4, 490), (4, 553), (4, 616), (4, 658),
    (6, 466), (6, 517), (6, 567), (6, 616), (6, 666), (6, 719),
    (6, 772), (6, 822), (6, 873),
    (8, 682.5), (8, 711), (8, 754), (8, 797), (8, 841), (8, 885), (8, 916.5), (8, 948),
]


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int
    code_rate: float
    spectral_efficiency: float
    sinr_ref_db: float

    def __post_init__(self):
        if self.modulation_order not in (2, 4, 6, 8):
            raise ValueError(f"MCS {self.index}: modulation order must be 2, 4, 6 or 8")
        if not 0.0 < self.code_rate < 1.0:
            raise ValueError(f"MCS {self.index}: code rate must lie in (0, 1)")
        if self.spectral_efficiency <= 0:
            raise ValueError(f"MCS {self.index}: spectral efficiency must be positive")


class McsTable:
    """Ordered MCS entries with strictly increasing efficiency and reference SINR."""

    COLUMNS = ("index", "modulation_order", "code_rate", "spectral_efficiency", "sinr_ref_db")

    def __init__(self, entries: list[McsEntry]):
        if not entries:
            raise ValueError("MCS table must not be empty")
        for pos, e in enumerate(entries):
            if e.index != pos:
                raise ValueError(f"MCS indices must be 0..{len(entries) - 1} in order")
        for a, b in zip(entries, entries[1:]):
            if b.spectral_efficiency <= a.spectral_efficiency:
                raise ValueError(f"spectral efficiency not increasing at MCS {b.index}")
            if b.sinr_ref_db <= a.sinr_ref_db:
                raise ValueError(f"reference SINR not increasing at MCS {b.index}")
        self.entries = list(entries)
        self.sinr_refs = [e.sinr_ref_db for e in entries]
        self.efficiencies = [e.spectral_efficiency for e in entries]

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, index: int) -> McsEntry:
        return self.entries[index]

    @classmethod
    def default(cls, ref_start_db: float = -4.0, ref_spacing_db: float = 1.0) -> "McsTable":
        """28-entry QPSK..256QAM table with equally spaced 10%-TBER anchors."""
        entries = []
        for i, (qm, rate) in enumerate(_NR_256QAM):
            r = rate / 1024.0
            entries.append(
                McsEntry(
                    index=i,
                    modulation_order=qm,
                    code_rate=r,
                    spectral_efficiency=round(qm * r, 4),
                    sinr_ref_db=ref_start_db + i * ref_spacing_db,
                )
            )
        return cls(entries)

    @classmethod
    def from_csv(cls, path) -> "McsTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(cls.COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing MCS table columns {sorted(missing)}")
            entries = [
                McsEntry(
                    index=int(row["index"]),
                    modulation_order=int(row["modulation_order"]),
                    code_rate=float(row["code_rate"]),
                    spectral_efficiency=float(row["spectral_efficiency"]),
                    sinr_ref_db=float(row["sinr_ref_db"]),
                )
                for row in reader
            ]
        return cls(entries)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for e in self.entries:
                w.writerow([e.index, e.modulation_order, e.code_rate, e.spectral_efficiency, e.sinr_ref_db])


def logistic_tb_error(sinr_db: float, sinr_ref_db: float, slope: float) -> float:
    """``1 / (1 + exp(slope*(sinr - ref) + ln 9))``: equals 0.1 at ``sinr_ref_db``."""
    x = slope * (sinr_db - sinr_ref_db) + _LN9
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


class LinkModel:
    """Maps (SINR, MCS) to a TB error probability via logistic curves."""

    def __init__(self, table: McsTable, slope: float = 2.0):
        if slope <= 0:
            raise ValueError(f"curve slope must be positive, got {slope!r}")
        self.table = table
        self.slope = slope

    def tb_error_probability(self, sinr_db: float, mcs, tb_bits: int | None = None) -> float:
        # curves are size independent; tb_bits kept for interface symmetry
        entry = mcs if isinstance(mcs, McsEntry) else self.table[mcs]
        return logistic_tb_error(sinr_db, entry.sinr_ref_db, self.slope)

    def highest_feasible_index(self, sinr_db: float, tber_target: float) -> int:
        """Largest MCS index whose TB error at ``sinr_db`` is within target,
        or -1 if none qualifies."""
        if tber_target >= 1.0:
            return len(self.table) - 1
        if tber_target <= 0.0:
            return -1
        # error <= t  <=>  ref <= sinr + (ln 9 - ln((1-t)/t)) / slope
        limit = sinr_db + (_LN9 - math.log((1.0 - tber_target) / tber_target)) / self.slope
        return bisect.bisect_right(self.table.sinr_refs, limit + 1e-12) - 1


def cb_error_probability(p_tb: float, c: int) -> float:
    """Per-CB error so that ``c`` i.i.d. code blocks fail the TB with ``p_tb``."""
    if not 0.0 <= p_tb <= 1.0:
        raise ValueError(f"p_tb must lie in [0, 1], got {p_tb!r}")
    if c < 1:
        raise ValueError(f"CB count must be >= 1, got {c!r}")
    if p_tb == 1.0:
        return 1.0
    return -math.expm1(math.log1p(-p_tb) / c)


def combined_sinr(transmission_sinrs_db) -> float:
    """Chase-combined SINR: linear power sum over transmissions."""
    if len(transmission_sinrs_db) == 0:
        raise ValueError("at least one transmission is required")
    if len(transmission_sinrs_db) == 1:
        return float(transmission_sinrs_db[0])
    return 10.0 * math.log10(sum(10.0 ** (s / 10.0) for s in transmission_sinrs_db))


def quantize_db(value, step_db: float):
    """Round to the nearest multiple of ``step_db`` (halves round up); a
    non-positive step is a passthrough."""
    if step_db <= 0:
        return value
    if np.ndim(value):
        return np.floor(np.asarray(value) / step_db + 0.5) * step_db
    return math.floor(value / step_db + 0.5) * step_db


@dataclass
class ChannelState:
    """Per-UE channel view: true SINR now and the last applied CQI report.

    Reports taken with :meth:`report` only become visible in ``cqi_sinr_db``
    once :meth:`refresh` is called at or after their effective time.
    """

    ue_id: str
    true_sinr_db: float
    cqi_sinr_db: float
    last_report_time: float = 0.0
    pending: list = field(default_factory=list)

    def report(self, now, quantization_step_db, noise_std_db=0.0, rng=None, delay=0.0) -> float:
        value = report_cqi(self.true_sinr_db, quantization_step_db, noise_std_db, rng)
        self.pending.append((now + delay, now, float(value)))
        return float(value)

    def refresh(self, now: float) -> float:
        while self.pending and self.pending[0][0] <= now:
            _, taken_at, value = self.pending.pop(0)
            self.cqi_sinr_db = value
            self.last_report_time = taken_at
        return self.cqi_sinr_db


def report_cqi(
    true_sinr_db,
    quantization_step_db: float,
    noise_std_db: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """CQI value for a report: measured SINR (true plus Gaussian measurement
    error) rounded to the nearest quantization step. Accepts scalars or
    arrays."""
    measured = true_sinr_db
    if noise_std_db > 0:
        if rng is None:
            raise ValueError("a random stream is required for noisy CQI")
        measured = true_sinr_db + rng.normal(0.0, noise_std_db, size=np.shape(true_sinr_db) or None)
    return quantize_db(measured, quantization_step_db)


def cqi_trace(
    true_sinr_db: np.ndarray,
    period_slots: int,
    delay_slots: int,
    quantization_step_db: float,
    noise_std_db: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """CQI value seen by the scheduler at the start of every slot.

    Reports are measured every ``period_slots`` slots and become usable
    ``delay_slots`` later; before the first report becomes usable the first
    report is assumed known.
    """
    n = len(true_sinr_db)
    report_slots = np.arange(0, n, max(1, period_slots))
    values = np.asarray(report_cqi(true_sinr_db[report_slots], quantization_step_db, noise_std_db, rng), dtype=float)
    effective = report_slots + delay_slots
    idx = np.searchsorted(effective, np.arange(n), side="right") - 1
    return values[np.maximum(idx, 0)]


def sinr_trace(
    geometry_db: float,
    n_slots: int,
    fading_std_db: float,
    corr_slots: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Static geometry plus first-order autoregressive fading in dB."""
    if fading_std_db <= 0 or n_slots == 0:
        return np.full(n_slots, float(geometry_db))
    rho = math.exp(-1.0 / corr_slots) if corr_slots > 0 else 0.0
    w = rng.normal(0.0, fading_std_db, size=n_slots)
    w[1:] *= math.sqrt(1.0 - rho * rho)
    return geometry_db + lfilter([1.0], [1.0, -rho], w)
