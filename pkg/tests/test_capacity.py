import math

import pytest

from eolla.capacity import run_seeds, system_capacity

from conftest import small_scenario


def test_run_seeds():
    assert run_seeds(5, 3) == [5, 6, 7]


def test_curve_and_capacity():
    sc = small_scenario(horizon=300.0, cells=1)
    res = system_capacity(sc, ue_counts=[1, 2, 30], runs_per_count=2)
    assert [p.ues_per_cell for p in res.curve] == [1, 2, 30]
    assert [p.n_ues for p in res.curve] == [2, 4, 60]
    for p in res.curve:
        assert 0.0 <= p.satisfied_fraction <= 1.0
        assert p.stderr == pytest.approx(math.sqrt(p.satisfied_fraction * (1 - p.satisfied_fraction) / p.n_ues))
    # 30 UEs of 30 Mbps each cannot fit one carrier
    assert res.curve[-1].satisfied_fraction < 0.9
    assert res.capacity == max((p.ues_per_cell for p in res.curve if p.satisfied_fraction >= 0.9), default=0)


def test_parallel_matches_serial():
    sc = small_scenario(horizon=200.0)
    a = system_capacity(sc, ue_counts=[1, 3], runs_per_count=2, workers=1)
    b = system_capacity(sc, ue_counts=[1, 3], runs_per_count=2, workers=2)
    assert a == b


def test_validation():
    sc = small_scenario()
    with pytest.raises(ValueError):
        system_capacity(sc, ue_counts=[0, 1])
    with pytest.raises(ValueError):
        system_capacity(sc, ue_counts=[1], satisfied_fraction=0.0)
