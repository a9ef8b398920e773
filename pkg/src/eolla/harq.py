"""Transport block segmentation and CBG-based HARQ processes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .phy import CB_MAX_BITS, LinkModel, combined_sinr

ALLOWED_N_MAX = (2, 4, 6, 8)
MAX_RETX = 3


class HarqExhaustedError(RuntimeError):
    """A process was asked to transmit beyond its transmission limit."""


@dataclass(frozen=True)
class CbgLayout:
    tb_bits: int
    c: int
    n_max: int
    m: int
    cbs_per_cbg: tuple[int, ...]
    cb_bits: tuple[int, ...]
    cbg_bits: tuple[int, ...]

    @property
    def cbg_first_cb(self) -> tuple[int, ...]:
        starts, acc = [], 0
        for n in self.cbs_per_cbg:
            starts.append(acc)
            acc += n
        return tuple(starts)


def _balanced(total: int, parts: int) -> list[int]:
    q, r = divmod(total, parts)
    return [q + 1] * r + [q] * (parts - r)


def segment(tb_bits: int, n_max: int, tb_based: bool = False) -> CbgLayout:
    """Split a TB into code blocks and code block groups.

    CB count ignores CRC/filler overhead: ``ceil(tb_bits / 8448)``. With
    ``tb_based=True`` all CBs form one group (single-bit feedback).
    """
    if tb_bits <= 0:
        raise ValueError(f"tb_bits must be positive, got {tb_bits!r}")
    if n_max not in ALLOWED_N_MAX:
        raise ValueError(f"n_max must be one of {set(ALLOWED_N_MAX)}, got {n_max!r}")
    c = math.ceil(tb_bits / CB_MAX_BITS)
    m = 1 if tb_based else min(n_max, c)
    groups = _balanced(c, m)
    cb_bits = _balanced(tb_bits, c)
    cbg_bits, pos = [], 0
    for n in groups:
        cbg_bits.append(sum(cb_bits[pos : pos + n]))
        pos += n
    return CbgLayout(
        tb_bits=tb_bits,
        c=c,
        n_max=n_max,
        m=m,
        cbs_per_cbg=tuple(groups),
        cb_bits=tuple(cb_bits),
        cbg_bits=tuple(cbg_bits),
    )


@dataclass(frozen=True)
class CbgFeedback:
    process_id: int
    tx_index: int
    bits: tuple[bool, ...]  # True = ACK
    f: int
    sent: tuple[int, ...] = ()  # CBGs carried by the transmission; empty = all

    @property
    def all_ack(self) -> bool:
        return self.f == 0


@dataclass
class HarqProcess:
    process_id: int
    ue_id: str
    layout: CbgLayout
    mcs_index: int
    packet: object = None
    pending_cbgs: list[bool] = field(default_factory=list)
    tx_count: int = 0
    per_cbg_sinr_history: list[list[float]] = field(default_factory=list)
    feedback_due: float | None = None
    max_retx: int = MAX_RETX
    tx_times: list[float] = field(default_factory=list)
    last_tx_cbgs: tuple[int, ...] = ()
    last_feedback: CbgFeedback | None = None
    first_tx_prbs: int = 0

    def __post_init__(self):
        if not self.pending_cbgs:
            self.pending_cbgs = [True] * self.layout.m
        if not self.per_cbg_sinr_history:
            self.per_cbg_sinr_history = [[] for _ in range(self.layout.m)]

    @property
    def max_tx(self) -> int:
        return self.max_retx + 1

    @property
    def pending_indices(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.pending_cbgs) if p)

    @property
    def pending_bits(self) -> int:
        return sum(b for b, p in zip(self.layout.cbg_bits, self.pending_cbgs) if p)

    @property
    def done(self) -> bool:
        return not any(self.pending_cbgs)


def draw_outcome(
    process: HarqProcess,
    sinr_db: float,
    link: LinkModel,
    rng: np.random.Generator,
    combining: bool = True,
) -> CbgFeedback:
    """Transmit the pending CBGs once and draw per-CB decoding outcomes.

    Each CB of a pending CBG fails independently with the CB error
    probability implied by the TB error at the CBG's (chase-combined) SINR;
    a CBG is NACKed if any of its CBs fails.
    """
    if process.tx_count >= process.max_tx:
        raise HarqExhaustedError(
            f"process {process.process_id} of UE {process.ue_id} already sent {process.tx_count} times"
        )
    sent = process.pending_indices
    if not sent:
        raise ValueError(f"process {process.process_id} has no pending CBGs")
    layout = process.layout
    u = rng.random(layout.c).tolist()
    starts = layout.cbg_first_cb
    inv_c = 1.0 / layout.c
    bits = [True] * layout.m
    for i in sent:
        history = process.per_cbg_sinr_history[i]
        history.append(sinr_db)
        eff = combined_sinr(history) if combining else sinr_db
        p_tb = link.tb_error_probability(eff, process.mcs_index)
        # per-CB error: 1 - (1 - p_tb)^(1/c)
        p_cb = 1.0 if p_tb >= 1.0 else -math.expm1(math.log1p(-p_tb) * inv_c)
        s = starts[i]
        if any(x < p_cb for x in u[s : s + layout.cbs_per_cbg[i]]):
            bits[i] = False
        else:
            process.pending_cbgs[i] = False
    process.tx_count += 1
    process.last_tx_cbgs = sent
    fb = CbgFeedback(process.process_id, process.tx_count, tuple(bits), bits.count(False), sent)
    process.last_feedback = fb
    return fb


def prbs_for_bits(bits: int, bits_per_prb: float) -> int:
    return math.ceil(bits / bits_per_prb - 1e-9)


def retransmission_payload(process: HarqProcess, bits_per_prb: float) -> int:
    """Whole PRBs needed to resend the pending CBGs at the frozen MCS."""
    return prbs_for_bits(process.pending_bits, bits_per_prb)


class LossEvent(NamedTuple):
    ue_id: str
    process_id: int
    packet: object


def residual_failure(process: HarqProcess) -> LossEvent | None:
    """Loss event if the process used all transmissions and CBGs remain pending."""
    if process.tx_count >= process.max_tx and not process.done:
        return LossEvent(process.ue_id, process.process_id, process.packet)
    return None
