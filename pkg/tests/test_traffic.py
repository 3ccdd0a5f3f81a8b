"""Unit tests for arrivals, demand evolution and departure accounting."""
import numpy as np
import pytest
from scipy import stats as sps

from cellsleep.radio import RadioParams
from cellsleep.traffic import (CATEGORIES, DEPARTED, IDLE, TrafficProfile,
                               UeState, arrival_rate, finalize_if_departing,
                               sample_arrivals, synth_profile, update_demand)

BOUNDS = ((0.0, 1000.0), (0.0, 1000.0))
BS_POS = np.array([[500.0, 500.0], [100.0, 100.0]])


def make_ue(demand=3e6, elapsed=0.0, category=CATEGORIES[0]):
    return UeState(id=0, position=(0.0, 0.0), category=category,
                   demand_bits=3e6, remaining_demand_bits=demand,
                   elapsed_ms=elapsed, phase=IDLE, serving_bs=None,
                   betas=np.array([1e-12]), best_bs=0, arrival_step=0)


class TestArrivalRate:
    def test_hand_value(self):
        assert arrival_rate(1.0, 1.0, 3.0, 1e-3) == pytest.approx(3.333e-4,
                                                                  rel=1e-3)

    def test_zero_density(self):
        assert arrival_rate(0.0, 1.0, 3.0, 1e-3) == 0.0

    def test_linear_in_dt(self):
        assert arrival_rate(2.0, 1.0, 3.0, 2e-3) == pytest.approx(
            2 * arrival_rate(2.0, 1.0, 3.0, 1e-3))

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            arrival_rate(-1.0, 1.0, 3.0, 1e-3)
        with pytest.raises(ValueError):
            arrival_rate(1.0, 0.0, 3.0, 1e-3)


class TestSampleArrivals:
    def test_zero_lambda_empty(self):
        rng = np.random.default_rng(0)
        out = sample_arrivals(rng, [0.0, 0.0, 0.0], BOUNDS, BS_POS,
                              RadioParams(), 3e6, 0, 0)
        assert out == []

    def test_poisson_mean(self):
        """Total arrivals over many steps stay within 3 sigma of N*lambda."""
        rng = np.random.default_rng(1)
        lam = 3.333e-4
        n_steps = 1_000_000
        # one vectorized draw per category is distributionally identical
        total = rng.poisson(lam, n_steps).sum()
        expect = n_steps * lam
        assert abs(total - expect) < 3 * np.sqrt(expect)

    def test_positions_uniform(self):
        rng = np.random.default_rng(2)
        ues = sample_arrivals(rng, [5000.0, 0.0, 0.0], BOUNDS, BS_POS,
                              RadioParams(), 3e6, 0, 0)
        assert len(ues) > 3000
        xs = np.array([u.position[0] for u in ues]) / 1000.0
        ys = np.array([u.position[1] for u in ues]) / 1000.0
        assert sps.kstest(xs, "uniform").pvalue > 0.01
        assert sps.kstest(ys, "uniform").pvalue > 0.01

    def test_fresh_state(self):
        rng = np.random.default_rng(3)
        ues = sample_arrivals(rng, [2.0, 2.0, 2.0], BOUNDS, BS_POS,
                              RadioParams(), 3e6, 17, 99)
        assert ues, "expected at least one arrival at lambda=2"
        ids = [u.id for u in ues]
        assert ids == list(range(17, 17 + len(ues)))
        for u in ues:
            assert u.phase == IDLE
            assert u.remaining_demand_bits == 3e6
            assert u.elapsed_ms == 0.0
            assert u.arrival_step == 99
            assert u.betas.shape == (2,)
            assert u.best_bs == int(np.argmax(u.betas))

    def test_shadowing_differs_across_ues(self):
        rng = np.random.default_rng(4)
        ues = sample_arrivals(rng, [3.0, 0.0, 0.0], BOUNDS, BS_POS,
                              RadioParams(), 3e6, 0, 0)
        betas = {tuple(u.betas) for u in ues}
        assert len(betas) == len(ues)


class TestDemandEvolution:
    def test_huge_rate_clamps_to_zero(self):
        ue = make_ue(demand=3e6)
        update_demand(ue, 3e9, 1e-3)
        assert ue.remaining_demand_bits == 0.0

    def test_zero_rate_only_ages(self):
        ue = make_ue(demand=3e6, elapsed=5.0)
        update_demand(ue, 0.0, 1e-3)
        assert ue.remaining_demand_bits == 3e6
        assert ue.elapsed_ms == pytest.approx(6.0)

    def test_never_negative_fuzz(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            ue = make_ue(demand=rng.uniform(0, 3e6))
            update_demand(ue, rng.uniform(0, 1e10), 1e-3)
            assert ue.remaining_demand_bits >= 0.0


class TestFinalize:
    def test_still_present(self):
        ue = make_ue(demand=1e6, elapsed=10.0)
        assert finalize_if_departing(ue) is None
        assert ue.phase != DEPARTED

    def test_finished(self):
        ue = make_ue(demand=0.0, elapsed=40.0)
        out = finalize_if_departing(ue)
        assert out is not None and out.finished
        assert out.drop_ratio == 0.0
        assert out.avg_rate_bps == pytest.approx(3e6 / 0.040)
        assert out.departure_delay_ms == 40.0
        assert ue.phase == DEPARTED

    def test_untouched_drop(self):
        ue = make_ue(demand=3e6, elapsed=50.0)
        out = finalize_if_departing(ue)
        assert out is not None and not out.finished
        assert out.drop_ratio == 1.0
        assert out.rho == 0.0

    def test_half_delivered_drop(self):
        ue = make_ue(demand=1.5e6, elapsed=50.0)
        out = finalize_if_departing(ue)
        assert out.drop_ratio == pytest.approx(0.5)
        assert out.rho == pytest.approx(0.5)
        assert out.avg_rate_bps == pytest.approx(out.required_rate_bps / 2)

    def test_finished_exactly_at_budget(self):
        ue = make_ue(demand=0.0, elapsed=50.0)
        out = finalize_if_departing(ue)
        assert out.finished
        assert out.rho == pytest.approx(1.0)

    def test_conservation_fuzz(self):
        """Delivered plus dropped equals the requested file size, exactly."""
        rng = np.random.default_rng(6)
        for _ in range(2000):
            cat = CATEGORIES[rng.integers(0, 3)]
            remaining = float(rng.uniform(0, 3e6)) if rng.random() < 0.9 else 0.0
            ue = make_ue(demand=remaining,
                         elapsed=cat.delay_budget_ms, category=cat)
            out = finalize_if_departing(ue)
            delivered = out.avg_rate_bps * (out.departure_delay_ms * 1e-3)
            assert delivered + out.dropped_bits == pytest.approx(
                ue.demand_bits, rel=1e-12)
            assert 0.0 <= out.drop_ratio <= 1.0
            assert out.finished == (out.drop_ratio == 0.0)


class TestProfile:
    def test_slot_lookup(self):
        dens = np.arange(6, dtype=float).reshape(3, 2)
        profile = TrafficProfile(slot_duration_s=10.0, densities=dens)
        assert profile.density_at(0.0, 1) == 0.0
        assert profile.density_at(15.0, 1) == 1.0
        assert profile.density_at(20.0, 1) == 0.0  # periodic wrap
        assert profile.density_at(15.0, 3) == 5.0

    def test_periodicity_fuzz(self):
        profile = synth_profile([24.0, 48.0, 48.0], 0.1, 72)
        rng = np.random.default_rng(7)
        for _ in range(200):
            t = rng.uniform(0, 5 * profile.period_s)
            z = int(rng.integers(1, 4))
            assert profile.density_at(t + profile.period_s, z) == \
                profile.density_at(t, z)

    def test_unknown_category(self):
        profile = synth_profile([1.0, 1.0, 1.0], 0.5, 4)
        with pytest.raises(ValueError):
            profile.density_at(0.0, 4)


class TestSynthProfile:
    def test_trough_at_zero_peak_at_midday(self):
        profile = synth_profile([30.0, 60.0, 60.0], 0.2, 72)
        d = profile.densities
        assert d[:, 0] == pytest.approx([6.0, 12.0, 12.0])
        assert d[:, 36] == pytest.approx([30.0, 60.0, 60.0])

    def test_constant_when_trough_is_peak(self):
        profile = synth_profile([10.0, 10.0, 10.0], 1.0, 24)
        assert np.ptp(profile.densities) == 0.0

    def test_minimum_equals_trough(self):
        profile = synth_profile([30.0, 60.0, 60.0], 0.25, 72)
        assert profile.densities.min(axis=1) == pytest.approx(
            [7.5, 15.0, 15.0], rel=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            synth_profile([0.0, 1.0, 1.0], 0.1, 72)
        with pytest.raises(ValueError):
            synth_profile([1.0, 1.0, 1.0], 1.5, 72)


class TestProfileCsv:
    def test_round_trip(self, tmp_path):
        profile = synth_profile([24.0, 48.0, 48.0], 0.1, 12)
        path = tmp_path / "profile.csv"
        profile.to_csv(path)
        back = TrafficProfile.from_csv(path, slot_duration_s=1200.0)
        assert np.array_equal(back.densities, profile.densities)
        assert back.period_slots == 12

    def test_missing_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("category,slot,density_mbps_km2\n1,0,1.0\n")
        with pytest.raises(ValueError, match="missing"):
            TrafficProfile.from_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("cat,slot,value\n1,0,1.0\n")
        with pytest.raises(ValueError, match="header"):
            TrafficProfile.from_csv(path)
