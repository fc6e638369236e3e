"""Firm lifecycle arithmetic: interest, dividends, employment, entry, exit."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from catinsim import firms
from catinsim.riskmodels import build_model_set
from catinsim.rng import substream


class TestInterest:
    def test_single_step(self):
        assert 1000.0 + firms.accrue_interest(1000.0, 0.001) == pytest.approx(1001.0)

    def test_zero_rate(self):
        assert firms.accrue_interest(500.0, 0.0) == 0.0

    def test_compounding_12_steps(self):
        k = 1000.0
        for _ in range(12):
            k += firms.accrue_interest(k, 0.001)
        assert k == pytest.approx(1000.0 * 1.001**12)
        assert k == pytest.approx(1012.066, abs=1e-3)


class TestDividends:
    def test_share_of_profit(self):
        assert firms.dividend_amount(100.0, 0.4) == pytest.approx(40.0)

    def test_no_dividend_on_loss(self):
        assert firms.dividend_amount(-50.0, 0.4) == 0.0

    def test_zero_profit(self):
        assert firms.dividend_amount(0.0, 0.4) == 0.0

    @given(st.floats(min_value=-1e9, max_value=1e9))
    def test_never_negative(self, profit):
        assert firms.dividend_amount(profit, 0.4) >= 0.0


class TestEmployment:
    def test_share_capped_at_one(self):
        assert firms.employed_share(100.0, 2.0, 500.0) == 1.0

    def test_share_value(self):
        assert firms.employed_share(100.0, 2.0, 20.0) == pytest.approx(0.4)

    def test_zero_capital_fully_employed(self):
        assert firms.employed_share(0.0, 2.0, 10.0) == 1.0

    def test_clock_increments_below_gamma_resets_above(self):
        assert firms.update_exit_clock(3, 0.5, 0.6) == 4
        assert firms.update_exit_clock(23, 0.7, 0.6) == 0

    def test_exit_after_tau_consecutive(self):
        clock = 0
        for _ in range(23):
            clock = firms.update_exit_clock(clock, 0.5, 0.6)
        assert not firms.should_exit(clock, 24)
        # one good step resets; no exit even after 23 more bad steps
        clock = firms.update_exit_clock(clock, 0.9, 0.6)
        assert clock == 0
        clock = firms.update_exit_clock(clock, 0.5, 0.6)
        assert clock == 1
        # a full uninterrupted run of 24 triggers
        clock = 0
        for _ in range(24):
            clock = firms.update_exit_clock(clock, 0.5, 0.6)
        assert firms.should_exit(clock, 24)

    def test_reinsurer_thresholds(self):
        clock = 0
        for _ in range(48):
            clock = firms.update_exit_clock(clock, 0.39, 0.4)
        assert firms.should_exit(clock, 48)


class TestProRata:
    def test_full_payment_when_sufficient(self):
        np.testing.assert_allclose(firms.pro_rata(100.0, np.array([60.0, 30.0])), [60.0, 30.0])

    def test_pro_rata_when_short(self):
        np.testing.assert_allclose(firms.pro_rata(100.0, np.array([60.0, 60.0])), [50.0, 50.0])

    def test_zero_claims(self):
        assert firms.pro_rata(100.0, np.array([])).size == 0


def entry_config(**overrides):
    kw = dict(
        entry_rate_insurer=0.3,
        entry_rate_reinsurer=0.05,
        initial_capital_insurer=80_000.0,
        initial_capital_reinsurer=2_000_000.0,
        initial_insurers=20,
        initial_reinsurers=4,
    )
    kw.update(overrides)
    return firms.EntryConfig(**kw)


class TestEntry:
    def test_zero_rate_never_enters(self):
        cfg = entry_config(entry_rate_insurer=0.0, entry_rate_reinsurer=0.0)
        models = build_model_set(2, 4, 2.0, 0.005)
        rng = substream(0, 0, 0, 10)
        mrng = substream(0, 0, 0, 11)
        for step in range(200):
            assert firms.process_entry(cfg, models, 4, step, 0, rng, mrng) == []

    def test_entry_rate_binomial_mean(self):
        # eta_i = 0.3 over 10^4 steps -> ~3000 insurer entries within 5%
        cfg = entry_config()
        models = build_model_set(2, 4, 2.0, 0.005)
        rng = substream(1, 0, 0, 10)
        mrng = substream(1, 0, 0, 11)
        insurers = reinsurers = 0
        for step in range(10_000):
            for f in firms.process_entry(cfg, models, 4, step, 0, rng, mrng):
                if f.kind == firms.INSURER:
                    insurers += 1
                else:
                    reinsurers += 1
        assert insurers == pytest.approx(3000, rel=0.05)
        assert reinsurers == pytest.approx(500, rel=0.15)

    def test_entrant_models_split_evenly(self):
        # two-model setting: entrants split ~50/50 over many entries
        cfg = entry_config(entry_rate_insurer=1.0, entry_rate_reinsurer=0.0)
        models = build_model_set(2, 4, 2.0, 0.005)
        rng = substream(2, 0, 0, 10)
        mrng = substream(2, 0, 0, 11)
        picks = []
        for step in range(4000):
            for f in firms.process_entry(cfg, models, 4, step, 0, rng, mrng):
                picks.append(f.risk_model.id)
        share = np.mean(np.array(picks) == 0)
        assert share == pytest.approx(0.5, abs=0.03)

    def test_no_reinsurer_when_disabled(self):
        cfg = entry_config(entry_rate_insurer=0.0, entry_rate_reinsurer=1.0)
        models = build_model_set(1, 4, 2.0, 0.005)
        rng = substream(3, 0, 0, 10)
        mrng = substream(3, 0, 0, 11)
        out = firms.process_entry(cfg, models, 4, 0, 0, rng, mrng, reinsurance_enabled=False)
        assert out == []

    def test_validation(self):
        with pytest.raises(ValueError):
            entry_config(entry_rate_insurer=1.5)
        with pytest.raises(ValueError):
            entry_config(initial_capital_reinsurer=10.0)


class TestFoundingFirms:
    def test_round_robin_models(self):
        models = build_model_set(3, 4, 2.0, 0.005)
        fs = firms.founding_firms(entry_config(initial_insurers=9, initial_reinsurers=3), models, 4)
        insurer_models = [f.risk_model.id for f in fs if f.kind == firms.INSURER]
        assert insurer_models == [0, 1, 2] * 3
        assert sum(f.kind == firms.REINSURER for f in fs) == 3

    def test_total_count_and_capital(self):
        models = build_model_set(1, 4, 2.0, 0.005)
        fs = firms.founding_firms(entry_config(), models, 4)
        assert len(fs) == 24
        assert all(f.capital == 80_000.0 for f in fs if f.kind == firms.INSURER)
        assert all(f.capital == 2_000_000.0 for f in fs if f.kind == firms.REINSURER)
