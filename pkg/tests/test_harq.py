import numpy as np
import pytest

from eolla.harq import (
    CbgFeedback,
    HarqExhaustedError,
    HarqProcess,
    draw_outcome,
    prbs_for_bits,
    residual_failure,
    retransmission_payload,
    segment,
)
from eolla.phy import LinkModel, McsTable


class FixedLink:
    """Link stub returning a constant TB error probability."""

    def __init__(self, p):
        self.p = p

    def tb_error_probability(self, sinr_db, mcs, tb_bits=None):
        return self.p


@pytest.mark.parametrize("tb,n,c,m", [
    (1, 8, 1, 1),
    (8448, 8, 1, 1),
    (8449, 8, 2, 2),
    (8448 * 8, 8, 8, 8),
    (8448 * 20, 8, 20, 8),
    (8448 * 20, 2, 20, 2),
    (8448 * 5, 6, 5, 5),
])
def test_segmentation_counts(tb, n, c, m):
    lay = segment(tb, n)
    assert (lay.c, lay.m) == (c, m)
    assert sum(lay.cbs_per_cbg) == c
    assert sum(lay.cb_bits) == tb
    assert sum(lay.cbg_bits) == tb
    assert max(lay.cbs_per_cbg) - min(lay.cbs_per_cbg) <= 1
    assert max(lay.cb_bits) <= 8448


def test_tb_based_layout_has_single_group():
    lay = segment(8448 * 20, 8, tb_based=True)
    assert lay.m == 1 and lay.c == 20


def test_segmentation_validation():
    with pytest.raises(ValueError):
        segment(0, 8)
    with pytest.raises(ValueError):
        segment(1000, 5)


def test_draw_outcome_all_fail_and_all_pass():
    lay = segment(8448 * 8, 8)
    rng = np.random.default_rng(0)
    proc = HarqProcess(0, "u", lay, 5)
    fb = draw_outcome(proc, 0.0, FixedLink(1.0), rng)
    assert fb.f == 8 and fb.tx_index == 1 and not fb.all_ack
    assert proc.pending_indices == tuple(range(8))
    fb = draw_outcome(proc, 0.0, FixedLink(0.0), rng)
    assert fb.all_ack and proc.done and fb.sent == tuple(range(8))


def test_pending_only_shrinks_and_acked_bits_are_kept():
    lay = segment(8448 * 16, 8)
    rng = np.random.default_rng(4)
    proc = HarqProcess(1, "u", lay, 3, max_retx=3)
    link = FixedLink(0.6)
    prev = set(proc.pending_indices)
    while not proc.done and proc.tx_count < proc.max_tx:
        fb = draw_outcome(proc, 0.0, link, rng)
        now = set(proc.pending_indices)
        assert now <= prev
        assert set(fb.sent) == prev
        assert {i for i, b in enumerate(fb.bits) if not b} == now
        prev = now


def test_transmission_limit():
    lay = segment(100, 8)
    proc = HarqProcess(0, "u", lay, 0, max_retx=1)
    rng = np.random.default_rng(0)
    draw_outcome(proc, 0.0, FixedLink(1.0), rng)
    draw_outcome(proc, 0.0, FixedLink(1.0), rng)
    assert residual_failure(proc) is not None
    with pytest.raises(HarqExhaustedError):
        draw_outcome(proc, 0.0, FixedLink(1.0), rng)


def test_no_pending_rejected():
    proc = HarqProcess(0, "u", segment(100, 8), 0)
    draw_outcome(proc, 0.0, FixedLink(0.0), np.random.default_rng(0))
    assert residual_failure(proc) is None
    with pytest.raises(ValueError):
        draw_outcome(proc, 0.0, FixedLink(0.0), np.random.default_rng(0))


def test_chase_combining_history():
    table = McsTable.default()
    link = LinkModel(table)
    proc = HarqProcess(0, "u", segment(8448, 8), 10)
    rng = np.random.default_rng(0)
    # error ~ 1 at -10 dB, so the TB stays pending
    draw_outcome(proc, -10.0, link, rng)
    draw_outcome(proc, -10.0, link, rng)
    assert proc.per_cbg_sinr_history[0] == [-10.0, -10.0]


def test_empirical_tb_error_matches_link():
    lay = segment(8448 * 8, 8)
    rng = np.random.default_rng(11)
    fails = 0
    n = 20_000
    for _ in range(n):
        proc = HarqProcess(0, "u", lay, 0)
        fails += draw_outcome(proc, 0.0, FixedLink(0.1), rng).f > 0
    assert fails / n == pytest.approx(0.1, abs=4 * (0.09 / n) ** 0.5)


def test_payload_prbs():
    assert prbs_for_bits(100, 50.0) == 2
    assert prbs_for_bits(101, 50.0) == 3
    lay = segment(8448 * 4, 4)
    proc = HarqProcess(0, "u", lay, 0, pending_cbgs=[True, False, False, True])
    assert proc.pending_bits == 2 * 8448
    assert retransmission_payload(proc, 1000.0) == 17


def test_feedback_flags():
    fb = CbgFeedback(0, 1, (True, False), 1)
    assert not fb.all_ack
