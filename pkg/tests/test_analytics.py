import math

import mpmath as mp
import pytest

from eolla import analytics as an

# reference values evaluated with mpmath at 40 digits, frozen here
P_CBG_01_8 = 0.01308371863399843674848
COND_LE2_01_8 = 0.99880602103552207734
R1_01_8 = 0.01046697490719874939879
R2_01_8_FP = 0.00954516365201733827793  # f(p)=p, K=ceil(0.0105)=1


def mp_pmf(k, p, m):
    p = mp.mpf(p)
    return mp.binomial(m, k) * p**k * (1 - p) ** (m - k)


class TestConversions:
    def test_tb_from_cbg_examples(self):
        assert an.tb_error_from_cbg(0.0, 8) == 0.0
        assert an.tb_error_from_cbg(1.0, 4) == 1.0
        assert an.tb_error_from_cbg(0.013084, 8) == pytest.approx(0.1, abs=1e-4)

    def test_cbg_from_tb_examples(self):
        assert an.cbg_error_from_tb(0.1, 8) == pytest.approx(0.013084, abs=1e-6)
        assert an.cbg_error_from_tb(0.1, 8) == pytest.approx(P_CBG_01_8, abs=1e-15)
        assert an.cbg_error_from_tb(0.0, 5) == 0.0

    @pytest.mark.parametrize("p", [0.0, 1e-9, 0.2, 0.73, 1.0])
    def test_single_group_identity(self, p):
        assert an.cbg_error_from_tb(p, 1) == pytest.approx(p, abs=1e-15)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, math.nan])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            an.tb_error_from_cbg(bad, 4)
        with pytest.raises(ValueError):
            an.cbg_error_from_tb(bad, 4)

    def test_zero_groups_rejected(self):
        with pytest.raises(ValueError):
            an.tb_error_from_cbg(0.1, 0)

    def test_small_probability_precision(self):
        # naive 1-(1-p)^m loses digits here
        assert an.tb_error_from_cbg(1e-15, 8) == pytest.approx(8e-15, rel=1e-9)

    def test_error_point(self):
        pt = an.ErrorPoint.from_tb(0.1, 8)
        assert pt.p_cbg == pytest.approx(P_CBG_01_8, abs=1e-15)
        back = an.ErrorPoint.from_cbg(pt.p_cbg, 8)
        assert abs(back.p_tb - 0.1) < 1e-12
        with pytest.raises(ValueError):
            an.ErrorPoint(0.1, 0.01, 9)


class TestPmf:
    def test_complement_sums_to_tb_error(self):
        p = an.cbg_error_from_tb(0.1, 8)
        assert sum(an.failed_cbg_pmf(k, p, 8) for k in range(1, 9)) == pytest.approx(0.1, abs=1e-9)

    def test_point_mass_at_zero(self):
        assert an.failed_cbg_pmf(0, 0.0, 8) == 1.0

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            an.failed_cbg_pmf(9, 0.1, 8)
        with pytest.raises(ValueError):
            an.failed_cbg_pmf(-1, 0.1, 8)

    def test_conditional_anchor(self):
        assert an.conditional_failed_cbg_cdf(2, 0.1, 8) == pytest.approx(0.998, abs=0.001)
        assert an.conditional_failed_cbg_cdf(2, 0.1, 8) == pytest.approx(COND_LE2_01_8, abs=1e-12)

    def test_conditional_needs_error(self):
        with pytest.raises(ValueError):
            an.conditional_failed_cbg_cdf(2, 0.0, 8)


class TestRetransmissions:
    def test_first_examples(self):
        assert an.expected_retx_first(0.1, 8) == pytest.approx(0.010467, abs=1e-5)
        assert an.expected_retx_first(0.1, 8) == pytest.approx(R1_01_8, abs=1e-14)
        assert an.expected_retx_first(0.0, 8) == 0.0
        assert an.expected_retx_first(1.0, 1) == 1.0

    def test_first_binomial_mean(self):
        for m in range(1, 9):
            for p in (0.05, 0.3, 0.9):
                expect = p * m * an.cbg_error_from_tb(p, m)
                assert an.expected_retx_first(p, m) == pytest.approx(expect, abs=1e-12)

    def test_first_unweighted_flag(self):
        p_cbg = an.cbg_error_from_tb(0.2, 8)
        assert an.expected_retx_first(0.2, 8, weight_by_tb_error=False) == pytest.approx(8 * p_cbg, abs=1e-12)

    def test_first_oracle_grid(self):
        for m in range(1, 9):
            for i in range(101):
                p = i / 100
                p_cbg = 1 - (1 - mp.mpf(p)) ** (mp.mpf(1) / m)
                brute = mp.mpf(p) * mp.fsum(k * mp_pmf(k, p_cbg, m) for k in range(1, m + 1))
                assert abs(an.expected_retx_first(p, m) - float(brute)) < 1e-12

    def test_second_zero_when_second_tx_succeeds(self):
        for p in (0.0, 0.1, 0.5, 1.0):
            assert an.expected_retx_second(p, 8) == 0.0

    def test_second_truncated_sum(self):
        val = an.expected_retx_second(0.1, 8, lambda p: p)
        assert val == pytest.approx(R2_01_8_FP, abs=1e-14)
        assert 0.0 < val <= an.expected_retx_first(0.1, 8)

    def test_second_zero_at_zero_error(self):
        assert an.expected_retx_second(0.0, 8, lambda p: p) == 0.0

    def test_sum_limit(self):
        assert an.second_tx_sum_limit(0.0, 8) == 1
        assert an.second_tx_sum_limit(0.01, 8) == 1
        assert an.second_tx_sum_limit(2.2, 8) == 3
        assert an.second_tx_sum_limit(11.0, 8) == 8

    def test_second_rejects_bad_f(self):
        with pytest.raises(ValueError):
            an.expected_retx_second(0.1, 8, lambda p: 2.0)

    def test_expectation_ordering(self):
        for p in (0.05, 0.2, 0.6):
            e = an.retx_expectation(p, 8, an.residual_factor(1.0))
            assert e.r_second <= e.r_first <= 8 * p + 1e-12

    def test_residual_factor(self):
        assert an.residual_factor(0.5)(0.2) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            an.residual_factor(1.5)


class TestRreg:
    def test_positive_with_equal_points(self):
        eff = an.EfficiencyInputs(1.0, 1.0)
        val = an.rreg(0.1, 0.1, 8, eff)
        tb_units = 8 + 0.1 * 8
        cbg_units = 8 + R1_01_8
        assert val == pytest.approx(100 * (1 - cbg_units / tb_units), abs=1e-10)
        assert val > 0

    def test_zero_error(self):
        assert an.rreg(0.0, 0.0, 8, an.EfficiencyInputs(2.0, 2.0)) == 0.0

    def test_gain_grows_with_error_and_efficiency(self):
        eff_lo, eff_hi = an.EfficiencyInputs(1.0, 1.0), an.EfficiencyInputs(1.2, 1.0)
        grid = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
        lo = [an.rreg(p, p, 8, eff_lo) for p in grid]
        hi = [an.rreg(p, p, 8, eff_hi) for p in grid]
        assert all(b > a for a, b in zip(lo, lo[1:]))
        assert all(h > l for h, l in zip(hi, lo))

    def test_efficiency_validation(self):
        with pytest.raises(ValueError):
            an.EfficiencyInputs(0.0, 1.0)

    def test_sweep_columns(self):
        rows = an.sweep([0.1, 0.2], [2, 8], an.EfficiencyInputs(1.0, 1.0))
        assert len(rows) == 4
        assert set(rows[0]) == {"p_tb", "m", "p_cbg", "r_first", "r_second", "rreg_percent"}


class TestTargets:
    def test_cbger(self):
        assert an.cbger_target(0.5, 0.21) == pytest.approx(0.2958, abs=1e-4)
        assert an.cbger_target(0.5, 0.5) == 0.5
        assert an.cbger_target(0.5, 0.0556) == pytest.approx(0.1, abs=1e-3)

    def test_residual(self):
        assert an.residual_tber_target(0.5, 0.044) == pytest.approx(0.1497, abs=1e-3)
        assert an.residual_tber_target(0.5, 0.25) == 0.5
        assert an.residual_tber_target(1.0, 0.1) == pytest.approx(0.1667, abs=1e-4)

    @pytest.mark.parametrize("up,down", [(0.0, 0.1), (0.5, 0.0), (-1.0, 0.1)])
    def test_steps_validated(self, up, down):
        with pytest.raises(ValueError):
            an.cbger_target(up, down)
        with pytest.raises(ValueError):
            an.residual_tber_target(up, down)

    def test_step_down_inverse(self):
        d = an.step_down_for_target(0.5, 0.1)
        assert an.cbger_target(0.5, d) == pytest.approx(0.1, abs=1e-15)

    def test_monotone(self):
        assert an.cbger_target(0.6, 0.2) < an.cbger_target(0.5, 0.2)
        assert an.cbger_target(0.5, 0.3) > an.cbger_target(0.5, 0.2)
