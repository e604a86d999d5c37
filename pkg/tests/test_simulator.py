"""Network sampling, link-level quantities, and trajectory aggregation."""

import math

import numpy as np
import pytest

from fdmfg import (
    ConfigurationError,
    Field2D,
    NetworkParams,
    NetworkRealization,
    PolicySource,
    SimWindow,
    build_grid,
    coverage_probability,
    downlink_sinr,
    path_gain,
    sample_network,
    simulate_trajectory,
    step_batteries,
    uplink_sinr,
    weighted_bs_ee,
)
from fdmfg.simulator import StepDraws, draw_step

REF = NetworkParams()
WINDOW = SimWindow(half_width=100.0, guard=50.0)


def make_realization(bs, ue, association, batteries):
    """Hand-built deployment for exact link arithmetic."""
    bs = np.asarray(bs, dtype=float)
    ue = np.asarray(ue, dtype=float)
    return NetworkRealization(
        bs_positions=bs,
        ue_positions=ue,
        association=np.asarray(association, dtype=int),
        batteries=np.asarray(batteries, dtype=float),
        rng_seed=0,
        scored=np.ones(len(bs), dtype=bool),
    )


class TestPathGain:
    def test_clamped_inside_unit_distance(self):
        assert path_gain(0.5, 3.0) == 1.0
        assert path_gain(1.0, 3.0) == 1.0

    def test_power_law_outside(self):
        assert path_gain(2.0, 3.0) == pytest.approx(0.125, rel=1e-15)

    def test_vectorized(self):
        g = path_gain(np.array([0.0, 1.0, 2.0, 4.0]), 3.0)
        assert g == pytest.approx([1.0, 1.0, 0.125, 0.015625], rel=1e-14)


class TestSampleNetwork:
    def test_same_seed_is_bitwise_identical(self):
        a = sample_network(REF, WINDOW, 123)
        b = sample_network(REF, WINDOW, 123)
        assert (a.bs_positions == b.bs_positions).all()
        assert (a.ue_positions == b.ue_positions).all()
        assert (a.association == b.association).all()
        assert (a.batteries == b.batteries).all()

    def test_poisson_counts_match_intensity(self):
        # guarded square side 300 m: expected 45 stations, equidispersed
        counts = np.array([
            sample_network(REF, WINDOW, s).bs_positions.shape[0]
            for s in range(400)
        ])
        expect = REF.lambda_bs * 300.0 ** 2
        se_mean = math.sqrt(expect / 400)
        assert abs(counts.mean() - expect) <= 3 * se_mean
        se_var = expect * math.sqrt(2.0 / 399)
        assert abs(counts.var(ddof=1) - expect) <= 3 * se_var

    def test_ue_window_and_batteries(self):
        r = sample_network(REF, WINDOW, 5)
        assert np.abs(r.ue_positions).max() <= WINDOW.half_width
        assert np.abs(r.bs_positions).max() <= WINDOW.half_width + WINDOW.guard
        assert r.batteries.min() >= 0.0
        assert r.batteries.max() <= 2.0
        assert r.batteries.shape[0] == r.bs_positions.shape[0]

    def test_association_is_nearest_station(self):
        r = sample_network(REF, WINDOW, 9)
        d = np.hypot(r.ue_positions[:, None, 0] - r.bs_positions[None, :, 0],
                     r.ue_positions[:, None, 1] - r.bs_positions[None, :, 1])
        assert (r.association == d.argmin(axis=1)).all()

    def test_empty_window_flagged_invalid(self):
        p = NetworkParams(lambda_bs=1e-9)
        r = sample_network(p, SimWindow(10.0, 0.0), 1)
        assert not r.valid


class TestDownlinkSinr:
    def test_single_station_unit_gain(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [2.0])
        sinr = downlink_sinr(r, 0, np.array([1.0]), np.array([1.0]), REF)
        assert sinr == pytest.approx(1e8, rel=1e-12)

    def test_zero_power_means_zero_sinr(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [2.0])
        assert downlink_sinr(r, 0, np.array([0.0]), np.array([1.0]), REF) == 0.0

    def test_symmetric_interferer_gives_unit_sinr(self):
        r = make_realization([[-5.0, 0.0], [5.0, 0.0]], [[0.0, 0.0]], [0], [2.0, 2.0])
        sinr = downlink_sinr(r, 0, np.array([1.0, 1.0]), np.array([1.0, 1.0]), REF)
        assert sinr == pytest.approx(1.0, rel=1e-4)


class TestUplinkSinr:
    def test_dead_serving_station_is_outage(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [0.0])
        sinr = uplink_sinr(r, 0, np.array([1.0]), 1.0, np.array([1.0]), REF)
        assert sinr == 0.0

    def test_self_interference_term(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [2.0])
        sinr = uplink_sinr(r, 0, np.array([1.0]), 1.0, np.array([1.0]), REF)
        expect = REF.p_t_ue / (1.0 * REF.h_self + REF.n0)
        assert sinr == pytest.approx(expect, rel=1e-12)

    def test_reduces_to_downlink_form_without_self_interference(self):
        p = NetworkParams(h_self=0.0, p_t_ue=1.0)
        r = make_realization([[0.0, 0.0]], [[3.0, 0.0]], [0], [2.0])
        ul = uplink_sinr(r, 0, np.array([0.7]), 1.0, np.array([1.0]), p)
        dl = downlink_sinr(r, 0, np.array([1.0]), np.array([1.0]), p)
        assert ul == pytest.approx(dl, rel=1e-12)

    def test_cross_station_interference(self):
        p = NetworkParams(h_self=0.0)
        r = make_realization([[0.0, 0.0], [2.0, 0.0]], [[0.5, 0.0]], [0], [2.0, 2.0])
        sinr = uplink_sinr(r, 0, np.array([0.0, 1.0]), 1.0, np.array([1.0, 1.0]), p)
        expect = p.p_t_ue / (0.125 + p.n0)
        assert sinr == pytest.approx(expect, rel=1e-12)


class TestWeightedBsEe:
    def test_one_downlink_user_with_unit_rate(self):
        # fading chosen so ln(1 + SINR) = 1 exactly
        p = NetworkParams(beta=0.0)
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [2.0])
        f = (math.e - 1.0) * p.n0 / 1.0
        draws = StepDraws(
            dl_mask=np.array([True]),
            ue_fading=np.array([[f]]),
            ul_fading=np.array([1.0]),
            bs_fading=np.array([[1.0]]),
        )
        ee = weighted_bs_ee(r, 0, np.array([1.0]), draws, p)
        assert ee == pytest.approx(1.0 / 7.0, rel=1e-12)

    def test_silent_station_contributes_zero_downlink(self):
        p = NetworkParams(beta=0.0)
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [0.0])
        draws = StepDraws(
            dl_mask=np.array([True]),
            ue_fading=np.array([[1.0]]),
            ul_fading=np.array([1.0]),
            bs_fading=np.array([[1.0]]),
        )
        assert weighted_bs_ee(r, 0, np.array([0.0]), draws, p) == 0.0

    def test_station_with_no_users_scores_zero(self):
        r = make_realization([[0.0, 0.0], [50.0, 0.0]], [[0.5, 0.0]], [0],
                             [2.0, 2.0])
        draws = StepDraws(
            dl_mask=np.array([True]),
            ue_fading=np.ones((1, 2)),
            ul_fading=np.ones(1),
            bs_fading=np.ones((2, 2)),
        )
        assert weighted_bs_ee(r, 1, np.array([1.0, 1.0]), draws, REF) == 0.0

    def test_uplink_term_weighting(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [2.0])
        draws = StepDraws(
            dl_mask=np.array([False]),
            ue_fading=np.ones((1, 1)),
            ul_fading=np.array([1.0]),
            bs_fading=np.array([[1.0]]),
        )
        for beta in (0.5, 1.0, 2.0):
            p = NetworkParams(beta=beta, h_self=0.0)
            rate = math.log1p(p.p_t_ue / p.n0)
            expect = beta * rate / (p.p_t_ue + p.p_ue_static)
            ee = weighted_bs_ee(r, 0, np.array([0.0]), draws, p)
            assert ee == pytest.approx(expect, rel=1e-12)


class TestStepBatteries:
    def test_exact_drain(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [2.0])
        policy = PolicySource.fixed_power(1.0, 1.0)
        r2, powers = step_batteries(r, policy, 0.0, 1.0)
        assert r2.batteries[0] == 1.0
        assert powers[0] == 1.0

    def test_truncation_at_empty_battery(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [0.5])
        policy = PolicySource.fixed_power(1.0, 1.0)
        r2, powers = step_batteries(r, policy, 0.0, 1.0)
        assert r2.batteries[0] == 0.0
        assert powers[0] == 0.5
        r3, powers = step_batteries(r2, policy, 1.0, 1.0)
        assert r3.batteries[0] == 0.0
        assert powers[0] == 0.0

    def test_zero_policy_preserves_batteries_bitwise(self):
        r = make_realization([[0.0, 0.0]], [[0.5, 0.0]], [0], [1.2345])
        policy = PolicySource.fixed_power(0.0, 1.0)
        r2, powers = step_batteries(r, policy, 0.0, 0.01)
        assert (r2.batteries == r.batteries).all()
        assert (powers == 0.0).all()

    def test_energy_accounting_over_full_period(self):
        rng = np.random.default_rng(77)
        batteries = rng.uniform(0.0, 2.0, 25)
        r = make_realization(rng.uniform(-50, 50, (25, 2)),
                             np.zeros((0, 2)), [], batteries)
        policy = PolicySource.fixed_power(1.0, 1.0)
        dt = 0.01
        spent = np.zeros(25)
        for k in range(100):
            r, powers = step_batteries(r, policy, k * dt, dt)
            spent += powers * dt
        drained = batteries - r.batteries
        assert np.abs(drained - spent).max() <= 1e-12 * 2.0
        assert r.batteries.min() >= 0.0


class TestPolicySource:
    def test_fixed_validates_range(self):
        with pytest.raises(ConfigurationError):
            PolicySource.fixed_power(1.5, 1.0)
        with pytest.raises(ConfigurationError):
            PolicySource.fixed_power(-0.1, 1.0)

    def test_fixed_emits_zero_at_dead_battery(self):
        policy = PolicySource.fixed_power(0.8, 1.0)
        out = policy.power(0.0, np.array([0.0, 0.5]))
        assert out[0] == 0.0
        assert out[1] == 0.8

    def test_bilinear_lookup_reproduces_bilinear_fields(self):
        grid = build_grid(1.0, 2.0, 10, 10)
        tt, ee = np.meshgrid(grid.times(), grid.energies(), indexing="ij")
        field = Field2D(grid, 0.1 + 0.2 * tt + 0.3 * ee)
        policy = PolicySource.from_equilibrium(field, p_max=10.0)
        for t, e in [(0.05, 0.11), (0.73, 1.99), (0.0, 2.0), (1.0, 0.01)]:
            got = policy.power(t, np.array([e]))[0]
            assert got == pytest.approx(0.1 + 0.2 * t + 0.3 * e, rel=1e-12)

    def test_lookup_clamps_outside_domain(self):
        grid = build_grid(1.0, 2.0, 10, 10)
        field = Field2D(grid, np.full((11, 11), 0.4))
        policy = PolicySource.from_equilibrium(field, p_max=1.0)
        assert policy.power(5.0, np.array([3.0]))[0] == pytest.approx(0.4)

    def test_equilibrium_source_requires_field(self):
        with pytest.raises(ConfigurationError):
            PolicySource("equilibrium")
        with pytest.raises(ConfigurationError):
            PolicySource("other")


class TestCoverageOracle:
    def test_single_station_rayleigh_closed_form(self):
        # Pr(SINR > delta) = exp(-delta * N0 * r^alpha / p) under unit-mean
        # exponential fading; r = 10 m puts the mean SINR at 1e5
        r = make_realization([[0.0, 0.0]], [[10.0, 0.0]], [0], [2.0])
        delta = math.log(1.25) * 1e5  # closed form gives exactly 0.8
        rng = np.random.default_rng(4242)
        n = 4000
        hits = 0
        for f in rng.exponential(size=n):
            sinr = downlink_sinr(r, 0, np.array([1.0]), np.array([f]), REF)
            hits += sinr > delta
        expect = math.exp(-delta * REF.n0 * 1000.0)
        assert expect == pytest.approx(0.8, rel=1e-12)
        se = math.sqrt(expect * (1 - expect) / n)
        assert abs(hits / n - expect) <= 3 * se


class TestSimulateTrajectory:
    GRID = build_grid(1.0, 2.0, 20, 20)

    def _stats(self, policy, n=40, seed=2024, workers=1, params=REF):
        return simulate_trajectory(policy, params, self.GRID, WINDOW, n,
                                   [-10.0, 0.0, 10.0], seed, workers=workers)

    def test_dead_fraction_tracks_uniform_initial_energy(self):
        # fixed 1 W drains e0 ~ U[0, 2] dry by time e0: dead share = t/2
        stats = self._stats(PolicySource.fixed_power(1.0, 1.0), n=60)
        times = stats.times
        for t_probe in (0.5, 1.0):
            x = int(round(t_probe / self.GRID.dt))
            assert stats.dead_fraction[x] == pytest.approx(t_probe / 2, abs=0.04)
        assert stats.dead_fraction[0] <= 0.02

    def test_worker_count_does_not_change_results(self):
        policy = PolicySource.fixed_power(1.0, 1.0)
        s1 = self._stats(policy, workers=1)
        s2 = self._stats(policy, workers=2)
        for name in ("mean_ee", "mean_ee_link", "coverage", "coverage_halfwidth",
                      "mean_energy", "dead_fraction", "battery_histogram"):
            assert (getattr(s1, name) == getattr(s2, name)).all(), name
        assert s1.n_bs_scored == s2.n_bs_scored

    def test_same_seed_bitwise_repeatable(self):
        policy = PolicySource.fixed_power(0.5, 1.0)
        s1 = self._stats(policy, n=8)
        s2 = self._stats(policy, n=8)
        assert (s1.mean_ee == s2.mean_ee).all()
        assert (s1.coverage == s2.coverage).all()

    def test_confidence_halfwidth_shrinks_with_sample_size(self):
        policy = PolicySource.fixed_power(1.0, 1.0)
        wide = self._stats(policy, n=8)
        narrow = self._stats(policy, n=64)
        assert narrow.ee_halfwidth.mean() < wide.ee_halfwidth.mean()

    def test_battery_histogram_counts_scored_stations(self):
        stats = self._stats(PolicySource.fixed_power(1.0, 1.0), n=8)
        totals = stats.battery_histogram.sum(axis=1)
        assert (totals == stats.n_bs_scored).all()

    def test_mean_energy_decreases_under_constant_drain(self):
        stats = self._stats(PolicySource.fixed_power(1.0, 1.0), n=16)
        assert (np.diff(stats.mean_energy) < 0).all()
        assert stats.mean_energy[0] == pytest.approx(1.0, abs=0.08)

    def test_coverage_lookup_by_threshold(self):
        stats = self._stats(PolicySource.fixed_power(1.0, 1.0), n=8)
        series, hw = coverage_probability(stats, 0.0)
        assert series.shape == (21,)
        assert (series == stats.coverage[:, 1]).all()
        with pytest.raises(ConfigurationError):
            coverage_probability(stats, 5.0)

    def test_all_realizations_discarded_is_an_error(self):
        p = NetworkParams(lambda_bs=1e-9)
        with pytest.raises(ConfigurationError, match="discarded"):
            simulate_trajectory(PolicySource.fixed_power(1.0, 1.0), p, self.GRID,
                                SimWindow(5.0, 0.0), 4, [0.0], 1)

    def test_input_validation(self):
        policy = PolicySource.fixed_power(1.0, 1.0)
        with pytest.raises(ConfigurationError):
            simulate_trajectory(policy, REF, self.GRID, WINDOW, 0, [0.0], 1)
        with pytest.raises(ConfigurationError):
            simulate_trajectory(policy, REF, self.GRID, WINDOW, 4, [], 1)


class TestDrawStep:
    def test_shapes_depend_only_on_counts(self):
        rng = np.random.default_rng(3)
        d = draw_step(rng, 5, 3)
        assert d.dl_mask.shape == (5,)
        assert d.ue_fading.shape == (5, 3)
        assert d.ul_fading.shape == (5,)
        assert d.bs_fading.shape == (3, 3)

    def test_unit_mean_exponential_fading(self):
        rng = np.random.default_rng(8)
        d = draw_step(rng, 2000, 4)
        assert d.ue_fading.mean() == pytest.approx(1.0, abs=0.03)
        assert abs(d.dl_mask.mean() - 0.5) < 0.04
