import numpy as np
import pytest

from eolla.traffic import (
    XR_FRAME_SIZE,
    XR_JITTER,
    TruncGaussParams,
    XrPacket,
    frame_bits,
    generate_arrivals,
    offered_rate_bps,
    sample_trunc_gauss,
)


def test_trunc_gauss_support_and_moments():
    rng = np.random.default_rng(3)
    x = sample_trunc_gauss(XR_JITTER, rng, size=200_000)
    assert x.min() >= -4.0 and x.max() <= 4.0
    assert abs(x.mean()) < 0.02
    # std of N(0, 2) truncated to +-2 sigma is 0.8796 * 2
    assert x.std() == pytest.approx(1.7592, abs=0.01)


def test_trunc_gauss_scalar_and_degenerate():
    rng = np.random.default_rng(0)
    assert isinstance(sample_trunc_gauss(XR_FRAME_SIZE, rng), float)
    assert sample_trunc_gauss(TruncGaussParams(0.0, 1.0, 2.0, 2.0), rng) == 2.0
    assert sample_trunc_gauss(TruncGaussParams(1.0, 0.0, 0.0, 2.0), rng) == 1.0
    with pytest.raises(ValueError):
        sample_trunc_gauss(TruncGaussParams(5.0, 0.0, 0.0, 2.0), rng)


def test_params_validation():
    with pytest.raises(ValueError):
        TruncGaussParams(0.0, -1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        TruncGaussParams(0.0, 1.0, 2.0, 1.0)


def test_frame_bits_rounds_up_to_bytes():
    assert frame_bits(62.5) == 500_000
    assert frame_bits(0.0011) == 16
    assert frame_bits(1.0) == 8000


def test_arrival_count_and_order():
    rng = np.random.default_rng(1)
    pk = generate_arrivals("0-0", 60.0, XR_JITTER, XR_FRAME_SIZE, 1000.0, rng)
    assert len(pk) == 60
    times = [p.arrival_time for p in pk]
    assert times == sorted(times)
    assert sorted(p.seq for p in pk) == list(range(60))
    for p in pk:
        nominal = p.seq * 1000.0 / 60.0
        assert -4.0 <= p.arrival_time - nominal <= 4.0
        assert p.deadline == pytest.approx(p.arrival_time + 10.0)
        assert 31_250 * 8 <= p.size_bits <= 93_750 * 8
        assert p.remaining_bits == p.unscheduled_bits == p.size_bits


def test_start_offset_shifts_frames():
    rng = np.random.default_rng(1)
    zero = TruncGaussParams(0.0, 0.0, 0.0, 0.0)
    pk = generate_arrivals("u", 60.0, zero, XR_FRAME_SIZE, 100.0, rng, start_offset=5.0)
    assert [p.arrival_time for p in pk] == pytest.approx([5.0 + k * 1000 / 60 for k in range(6)])


def test_arrival_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        generate_arrivals("u", 0.0, XR_JITTER, XR_FRAME_SIZE, 10.0, rng)
    with pytest.raises(ValueError):
        generate_arrivals("u", 60.0, XR_JITTER, XR_FRAME_SIZE, 0.0, rng)


def test_offered_rate():
    assert offered_rate_bps(60.0, XR_FRAME_SIZE) == pytest.approx(30e6)


def test_packet_delivered_flag():
    p = XrPacket("u", 0, 0.0, 100, 10.0)
    assert not p.delivered
    p.remaining_bits = 0
    assert p.delivered
