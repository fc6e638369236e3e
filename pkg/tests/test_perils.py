"""Event profile tests: timing, sizing, allocation, determinism, serialization."""

import numpy as np
import pytest

from catinsim.perils import (
    build_event_profile,
    draw_event_times,
    load_profile,
    region_of_risk,
    save_profile,
)
from catinsim.rng import substream


def profile_kwargs(**overrides):
    kw = dict(lam=0.03, sigma=2.0, n_regions=4, t_max=4000, master_seed=0)
    kw.update(overrides)
    return kw


class TestEventTimes:
    def test_mean_separation(self):
        # lambda = 0.03 -> separation 33.3 steps on average
        times = draw_event_times(0.03, 2_000_000, 0, substream(1, 0, 0, 1))
        seps = np.diff(np.array(times))
        assert seps.mean() == pytest.approx(33.33, rel=0.02)

    def test_zero_horizon_empty(self):
        assert draw_event_times(0.03, 0, 0, substream(1, 0, 0, 1)) == []

    def test_zero_rate_empty(self):
        assert draw_event_times(0.0, 1000, 0, substream(1, 0, 0, 1)) == []

    def test_deterministic_given_stream(self):
        a = draw_event_times(0.03, 5000, 0, substream(9, 2, 3, 1))
        b = draw_event_times(0.03, 5000, 0, substream(9, 2, 3, 1))
        assert a == b

    def test_times_within_horizon(self):
        times = draw_event_times(0.2, 500, 0, substream(1, 1, 0, 1))
        assert all(0 <= t < 500 for t in times)


class TestRegionAssignment:
    def test_partition_and_balance(self):
        regions = region_of_risk(20_000, 4)
        counts = np.bincount(regions)
        assert counts.sum() == 20_000
        assert counts.max() - counts.min() <= 1

    def test_uneven_split(self):
        counts = np.bincount(region_of_risk(10, 3))
        assert sorted(counts) == [3, 3, 4]


class TestEventProfile:
    def test_same_replication_is_bit_identical(self):
        a = build_event_profile(7, **profile_kwargs())
        b = build_event_profile(7, **profile_kwargs())
        assert a == b

    def test_independent_of_nothing_else(self):
        # distinct replications get distinct schedules
        a = build_event_profile(1, **profile_kwargs())
        b = build_event_profile(2, **profile_kwargs())
        assert a.events != b.events

    def test_zero_rate_no_events(self):
        p = build_event_profile(0, **profile_kwargs(lam=0.0))
        assert p.events == ()

    def test_expected_event_count(self):
        # ~ lam * regions * steps, Monte Carlo over profiles
        total = sum(
            len(build_event_profile(r, **profile_kwargs()).events) for r in range(20)
        )
        expected = 0.03 * 4 * 4000 * 20
        assert total == pytest.approx(expected, rel=0.05)

    def test_sorted_by_time_then_region(self):
        p = build_event_profile(3, **profile_kwargs())
        keys = [(e.time, e.region) for e in p.events]
        assert keys == sorted(keys)

    def test_damage_within_truncation(self):
        p = build_event_profile(3, **profile_kwargs())
        assert all(0.25 <= e.total_damage_fraction <= 1.0 for e in p.events)

    def test_merged_events_capped_at_one(self):
        p = build_event_profile(5, **profile_kwargs(lam=0.9, t_max=300))
        seen = set()
        for e in p.events:
            assert (e.region, e.time) not in seen  # merged, so unique
            seen.add((e.region, e.time))
            assert e.total_damage_fraction <= 1.0

    def test_allocation_frozen_by_seed(self):
        p = build_event_profile(3, **profile_kwargs())
        e = p.events[0]
        np.testing.assert_array_equal(e.allocate(5000), e.allocate(5000))

    def test_allocation_mean_tracks_event_size(self):
        p = build_event_profile(3, **profile_kwargs())
        e = p.events[0]
        d = e.allocate(5000)
        assert abs(d.mean() - e.total_damage_fraction) < 0.02

    def test_coincidence_probability(self):
        # P(>=2 regions hit in one step) at lam=0.03, n=4; reference 0.00494
        # with +-20% relative tolerance over >= 1e6 simulated steps
        steps_per_profile = 125_000
        coincident = 0
        total_steps = 0
        for rep in range(8):
            p = build_event_profile(
                rep, **profile_kwargs(t_max=steps_per_profile)
            )
            counts = {}
            for e in p.events:
                counts[e.time] = counts.get(e.time, 0) + 1
            coincident += sum(1 for v in counts.values() if v >= 2)
            total_steps += steps_per_profile
        freq = coincident / total_steps
        assert freq == pytest.approx(0.00494, rel=0.20)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        p = build_event_profile(11, **profile_kwargs(t_max=2000))
        path = tmp_path / "profile.jsonl"
        save_profile(p, path)
        assert load_profile(path) == p

    def test_rejects_unknown_schema(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"schema": "something-else"}\n')
        with pytest.raises(ValueError, match="schema"):
            load_profile(path)
