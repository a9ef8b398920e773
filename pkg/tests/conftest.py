import pytest

from eolla.config import Scenario


def small_scenario(*overrides, horizon=400.0, cells=1, ues=2):
    base = [f"run.horizon_ms={horizon}", f"run.cells={cells}", f"run.ues_per_cell={ues}"]
    return Scenario().with_overrides(base + list(overrides))


@pytest.fixture
def tiny():
    return small_scenario
