"""MCS selection and outer-loop link adaptation (OLLA) policies.

Three policies share one offset state:

* ``TRADITIONAL``: classic ACK/NACK OLLA on first-transmission TB feedback.
* ``EOLLA_ALG1``: offset moves by the NACK fraction of the first-transmission
  multi-bit feedback, steering the first-transmission CBG error rate.
* ``EOLLA_ALG2``: offset decreases on any all-ACK first or second
  transmission and increases by the NACK fraction of failed second
  transmissions, steering the residual TB error rate after two
  transmissions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from . import analytics
from .harq import CbgFeedback
from .phy import LinkModel, McsTable


class Policy(str, enum.Enum):
    TRADITIONAL = "TRADITIONAL"
    EOLLA_ALG1 = "EOLLA_ALG1"
    EOLLA_ALG2 = "EOLLA_ALG2"


@dataclass(frozen=True)
class OllaState:
    policy: Policy
    offset_db: float = 0.0
    step_up_db: float = 0.5
    step_down_db: float = 0.0556
    offset_min_db: float = -25.0
    offset_max_db: float = 15.0

    def __post_init__(self):
        if not (self.step_up_db > 0 and self.step_down_db > 0):
            raise ValueError("OLLA step sizes must be strictly positive")
        if self.offset_min_db > self.offset_max_db:
            raise ValueError("offset_min_db must not exceed offset_max_db")
        if not self.offset_min_db <= self.offset_db <= self.offset_max_db:
            raise ValueError(f"offset {self.offset_db} outside [{self.offset_min_db}, {self.offset_max_db}]")

    def moved(self, delta_db: float) -> "OllaState":
        if delta_db == 0.0:
            return self
        offset = min(self.offset_max_db, max(self.offset_min_db, self.offset_db + delta_db))
        return replace(self, offset_db=offset)


def effective_sinr(cqi_sinr_db: float, state: OllaState) -> float:
    return cqi_sinr_db - state.offset_db


def select_mcs(effective_sinr_db: float, tber_target: float, table: McsTable, link: LinkModel) -> int:
    """Most efficient MCS whose TB error at ``effective_sinr_db`` meets the
    target; the lowest index when none does."""
    if link.table is not table:
        raise ValueError("link model was built for a different MCS table")
    return max(link.highest_feasible_index(effective_sinr_db, tber_target), 0)


def update_traditional(state: OllaState, tb_ack: bool) -> OllaState:
    return state.moved(-state.step_down_db if tb_ack else state.step_up_db)


def update_alg1(state: OllaState, feedback: CbgFeedback) -> OllaState:
    m = len(feedback.bits)
    f = feedback.f
    return state.moved(-state.step_down_db * (m - f) / m + state.step_up_db * f / m)


def update_alg2(state: OllaState, feedback: CbgFeedback, tx_index: int) -> OllaState:
    if feedback.f == 0:
        if tx_index in (1, 2):
            return state.moved(-state.step_down_db)
        return state
    if tx_index == 2:
        return state.moved(state.step_up_db * feedback.f / len(feedback.bits))
    return state


def update(state: OllaState, feedback: CbgFeedback) -> OllaState:
    """Route one feedback message to the state's policy."""
    tx = feedback.tx_index
    if state.policy is Policy.TRADITIONAL:
        return update_traditional(state, feedback.all_ack) if tx == 1 else state
    if state.policy is Policy.EOLLA_ALG1:
        return update_alg1(state, feedback) if tx == 1 else state
    return update_alg2(state, feedback, tx)


def converged_operating_point(state: OllaState) -> float:
    """Error rate the policy steers to with the state's step sizes."""
    if state.policy is Policy.EOLLA_ALG1:
        return analytics.cbger_target(state.step_up_db, state.step_down_db)
    if state.policy is Policy.EOLLA_ALG2:
        return analytics.residual_tber_target(state.step_up_db, state.step_down_db)
    raise ValueError(
        "TRADITIONAL OLLA steers the first-transmission TBER; use analytics.cbger_target(up, down)"
    )


def inner_tber_target(policy: Policy, tber_target: float, step_up: float, step_down: float, n_max: int) -> float:
    """TBER target handed to MCS selection for each policy."""
    if policy is Policy.EOLLA_ALG1:
        return analytics.tb_error_from_cbg(analytics.cbger_target(step_up, step_down), n_max)
    return tber_target
