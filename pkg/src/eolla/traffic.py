"""XR downlink traffic: video frames with truncated-Gaussian jitter and size."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TruncGaussParams:
    """Gaussian ``N(mean, std**2)`` restricted to ``[lo, hi]``."""

    mean: float
    std: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be >= 0, got {self.std!r}")
        if self.lo > self.hi:
            raise ValueError(f"lo ({self.lo}) must not exceed hi ({self.hi})")


# XR evaluation defaults: jitter in ms, frame size in kByte
XR_JITTER = TruncGaussParams(0.0, 2.0, -4.0, 4.0)
XR_FRAME_SIZE = TruncGaussParams(62.5, 6.25, 31.25, 93.75)

_MAX_REJECTION_ROUNDS = 10_000


def sample_trunc_gauss(params: TruncGaussParams, rng: np.random.Generator, size=None):
    """Draw from a truncated Gaussian by rejection.

    Returns a float when ``size`` is None, otherwise an array of ``size``
    samples. A point interval returns the point value regardless of
    ``mean`` and ``std``.
    """
    lo, hi = params.lo, params.hi
    n = 1 if size is None else int(np.prod(size))
    if lo == hi:
        out = np.full(n, float(lo))
    elif params.std == 0:
        if not lo <= params.mean <= hi:
            raise ValueError("zero-variance distribution has its mass outside [lo, hi]")
        out = np.full(n, float(params.mean))
    else:
        out = np.empty(n)
        filled = 0
        for _ in range(_MAX_REJECTION_ROUNDS):
            batch = rng.normal(params.mean, params.std, size=max(2 * (n - filled), 16))
            batch = batch[(batch >= lo) & (batch <= hi)]
            take = min(batch.size, n - filled)
            out[filled : filled + take] = batch[:take]
            filled += take
            if filled == n:
                break
        else:
            raise RuntimeError("rejection sampler did not converge; interval too far in the tail")
    if size is None:
        return float(out[0])
    return out.reshape(size)


@dataclass(slots=True)
class XrPacket:
    """One video frame queued at the base station.

    ``remaining_bits`` counts bits not yet acknowledged by the UE;
    ``unscheduled_bits`` counts bits not yet placed in any transport block.
    """

    ue_id: str
    seq: int
    arrival_time: float
    size_bits: int
    deadline: float
    remaining_bits: int = -1
    unscheduled_bits: int = -1
    status: str | None = None
    completed_at: float | None = None
    in_flight: int = 0
    counted: bool = True

    def __post_init__(self):
        if self.remaining_bits < 0:
            self.remaining_bits = self.size_bits
        if self.unscheduled_bits < 0:
            self.unscheduled_bits = self.size_bits

    @property
    def delivered(self) -> bool:
        return self.remaining_bits == 0


def frame_bits(size_kbytes: float) -> int:
    """Frame size in kByte (1000 bytes) rounded up to whole bytes, in bits."""
    return 8 * math.ceil(round(size_kbytes * 1000.0, 6))


def generate_arrivals(
    ue_id: str,
    fps: float,
    jitter: TruncGaussParams,
    size: TruncGaussParams,
    horizon: float,
    rng: np.random.Generator,
    pdb: float = 10.0,
    start_offset: float = 0.0,
) -> list[XrPacket]:
    """Frames arriving at the base station during ``[0, horizon)`` ms.

    Frame ``k`` nominally arrives at ``start_offset + k * 1000 / fps`` and is
    shifted by a jitter sample; sizes are drawn in kByte. Sequence numbers
    follow the nominal order, the returned list is sorted by jittered
    arrival time.
    """
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps!r}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    period = 1000.0 / fps
    count = math.ceil((horizon - start_offset) / period - 1e-9)
    jit = sample_trunc_gauss(jitter, rng, size=count)
    sizes = sample_trunc_gauss(size, rng, size=count)
    packets = []
    for k in range(count):
        arrival = start_offset + k * period + float(jit[k])
        packets.append(
            XrPacket(
                ue_id=ue_id,
                seq=k,
                arrival_time=arrival,
                size_bits=frame_bits(float(sizes[k])),
                deadline=arrival + pdb,
            )
        )
    packets.sort(key=lambda p: (p.arrival_time, p.seq))
    return packets


def offered_rate_bps(fps: float, size: TruncGaussParams) -> float:
    """Nominal offered rate using the untruncated mean frame size."""
    return fps * size.mean * 8000.0
