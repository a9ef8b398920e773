"""Closed-form error, retransmission and convergence calculations for
CBG-based HARQ.

All functions are pure and operate on Python floats. They serve both as a
standalone calculator (see ``eolla analytics``) and as the oracle against
which the Monte-Carlo simulator is validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

SecondTxErrorFn = Callable[[float], float]


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")


def _check_count(name: str, m: int) -> None:
    if m < 1:
        raise ValueError(f"{name} must be >= 1, got {m!r}")


def no_second_tx_errors(p_tb: float) -> float:
    """Second transmissions always succeed (soft combining assumption)."""
    return 0.0


def residual_factor(rho: float) -> SecondTxErrorFn:
    """Return ``f(p) = rho * p``, a pessimistic second-transmission error model."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"residual factor must lie in [0, 1], got {rho!r}")

    def f(p_tb: float) -> float:
        return rho * p_tb

    return f


@dataclass(frozen=True)
class ErrorPoint:
    """An operating point: TB error probability, per-CBG error probability
    and number of CBGs."""

    p_tb: float
    p_cbg: float
    m: int

    def __post_init__(self):
        _check_prob("p_tb", self.p_tb)
        _check_prob("p_cbg", self.p_cbg)
        if not 1 <= self.m <= 8:
            raise ValueError(f"m must lie in [1, 8], got {self.m!r}")

    @classmethod
    def from_tb(cls, p_tb: float, m: int) -> "ErrorPoint":
        return cls(p_tb=p_tb, p_cbg=cbg_error_from_tb(p_tb, m), m=m)

    @classmethod
    def from_cbg(cls, p_cbg: float, m: int) -> "ErrorPoint":
        return cls(p_tb=tb_error_from_cbg(p_cbg, m), p_cbg=p_cbg, m=m)


@dataclass(frozen=True)
class RetxExpectation:
    r_first: float
    r_second: float
    f_second: float


@dataclass(frozen=True)
class EfficiencyInputs:
    """Resource efficiency (bits per resource unit) of the MCS picked in the
    CBG-based and TB-based cases."""

    xi_cbg: float
    xi_tb: float

    def __post_init__(self):
        if not (self.xi_cbg > 0 and self.xi_tb > 0):
            raise ValueError("spectral efficiencies must be strictly positive")


def tb_error_from_cbg(p_cbg: float, m: int) -> float:
    """TB error probability for ``m`` i.i.d. CBGs of error probability ``p_cbg``."""
    _check_prob("p_cbg", p_cbg)
    _check_count("m", m)
    # -expm1(m*log1p(-p)) keeps full precision for small p
    if p_cbg == 1.0:
        return 1.0
    return -math.expm1(m * math.log1p(-p_cbg))


def cbg_error_from_tb(p_tb: float, m: int) -> float:
    """Per-CBG error probability that yields TB error ``p_tb`` over ``m`` CBGs."""
    _check_prob("p_tb", p_tb)
    _check_count("m", m)
    if p_tb == 1.0:
        return 1.0
    return -math.expm1(math.log1p(-p_tb) / m)


def failed_cbg_pmf(k: int, p_cbg: float, m: int) -> float:
    """Probability of exactly ``k`` failed CBGs out of ``m``."""
    _check_prob("p_cbg", p_cbg)
    _check_count("m", m)
    if not 0 <= k <= m:
        raise ValueError(f"k must lie in [0, m={m}], got {k!r}")
    return math.comb(m, k) * p_cbg**k * (1.0 - p_cbg) ** (m - k)


def conditional_failed_cbg_cdf(k_max: int, p_tb: float, m: int) -> float:
    """P(at most ``k_max`` failed CBGs | at least one failed), at TB error ``p_tb``."""
    _check_prob("p_tb", p_tb)
    if p_tb == 0.0:
        raise ValueError("conditioning on a TB error requires p_tb > 0")
    p_cbg = cbg_error_from_tb(p_tb, m)
    mass = sum(failed_cbg_pmf(k, p_cbg, m) for k in range(1, min(k_max, m) + 1))
    return mass / tb_error_from_cbg(p_cbg, m)


def _weighted_failures(p_cbg: float, m: int, k_max: int) -> float:
    return sum(k * failed_cbg_pmf(k, p_cbg, m) for k in range(1, k_max + 1))


def expected_retx_first(p_tb: float, m: int, weight_by_tb_error: bool = True) -> float:
    """Mean number of CBGs retransmitted after the first transmission.

    With ``weight_by_tb_error=False`` the leading TB-error factor is dropped,
    leaving the plain binomial mean ``m * p_cbg``; provided for sensitivity
    analysis only.
    """
    p_cbg = cbg_error_from_tb(p_tb, m)
    total = _weighted_failures(p_cbg, m, m)
    return p_tb * total if weight_by_tb_error else total


def second_tx_sum_limit(r_first: float, m: int) -> int:
    """Upper summation limit for the second-transmission expectation:
    ``ceil(r_first)`` clamped to ``[1, m]``."""
    return min(max(math.ceil(r_first), 1), m)


def expected_retx_second(
    p_tb: float,
    m: int,
    f: SecondTxErrorFn = no_second_tx_errors,
    weight_by_tb_error: bool = True,
) -> float:
    """Mean number of CBGs retransmitted after the second transmission."""
    p_cbg = cbg_error_from_tb(p_tb, m)
    f_val = f(p_tb)
    _check_prob("f(p_tb)", f_val)
    k_max = second_tx_sum_limit(expected_retx_first(p_tb, m, weight_by_tb_error), m)
    return f_val * _weighted_failures(p_cbg, m, k_max)


def retx_expectation(
    p_tb: float, m: int, f: SecondTxErrorFn = no_second_tx_errors
) -> RetxExpectation:
    return RetxExpectation(
        r_first=expected_retx_first(p_tb, m),
        r_second=expected_retx_second(p_tb, m, f),
        f_second=f(p_tb),
    )


def rreg(
    p_tb_cbgcase: float,
    p_tb_tbcase: float,
    m: int,
    eff: EfficiencyInputs,
    f: SecondTxErrorFn = no_second_tx_errors,
) -> float:
    """Radio resource efficiency gain (percent) of CBG- over TB-based HARQ.

    The numerator is evaluated at the CBG-case operating point, the
    denominator at the TB-case operating point.
    """
    _check_prob("p_tb_cbgcase", p_tb_cbgcase)
    _check_prob("p_tb_tbcase", p_tb_tbcase)
    cbg_units = m + expected_retx_first(p_tb_cbgcase, m) + expected_retx_second(p_tb_cbgcase, m, f)
    tb_units = m + p_tb_tbcase * m + f(p_tb_tbcase) * m
    denominator = tb_units / eff.xi_tb
    if denominator == 0.0:
        raise ZeroDivisionError("TB-case resource term is zero")
    return 100.0 * (1.0 - (cbg_units / eff.xi_cbg) / denominator)


def _check_steps(step_up: float, step_down: float) -> None:
    if not (step_up > 0 and step_down > 0):
        raise ValueError(f"step sizes must be positive, got up={step_up!r}, down={step_down!r}")


def cbger_target(step_up: float, step_down: float) -> float:
    """First-transmission CBG error rate reached by the CBG-ratio OLLA.

    Also the TB error rate reached by the classic ACK/NACK OLLA with the same
    steps.
    """
    _check_steps(step_up, step_down)
    return 1.0 / (1.0 + step_up / step_down)


def residual_tber_target(step_up: float, step_down: float) -> float:
    """Residual TB error rate after the second transmission reached by the
    second-transmission OLLA."""
    _check_steps(step_up, step_down)
    return 1.0 / (1.0 + step_up / (2.0 * step_down))


def step_down_for_target(step_up: float, target: float) -> float:
    """Down-step that makes ``cbger_target(step_up, .)`` equal ``target``."""
    if not 0.0 < target < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {target!r}")
    _check_steps(step_up, 1.0)
    return step_up * target / (1.0 - target)


def sweep(
    p_tb_values, m_values, eff: EfficiencyInputs, f: SecondTxErrorFn = no_second_tx_errors
) -> list[dict]:
    """Grid of analytic quantities, one row per ``(p_tb, m)``.

    The RREG column compares CBG- and TB-based HARQ at the same TB error
    probability.
    """
    rows = []
    for m in m_values:
        for p in p_tb_values:
            rows.append(
                {
                    "p_tb": p,
                    "m": m,
                    "p_cbg": cbg_error_from_tb(p, m),
                    "r_first": expected_retx_first(p, m),
                    "r_second": expected_retx_second(p, m, f),
                    "rreg_percent": rreg(p, p, m, eff, f),
                }
            )
    return rows
