"""Quantum-trajectory unraveling against the analytic loss formulas."""

import math

import numpy as np
import pytest

from spinsqueeze.errors import EmptySystem, InsufficientStatistics
from spinsqueeze.mcwf import (
    TrajectoryState,
    TwoModeJumpModel,
    ensemble_observables,
    evolve_nonhermitian,
    mode_averages_from_coeffs,
    run_trajectory,
    sample_jump,
)
from spinsqueeze.special import binomial_log_weights
from spinsqueeze.spin import (
    MixingState,
    ModeAverages,
    moments_from_mode_averages,
    squeezing_parameter,
)
from spinsqueeze.twomode import LossRates, TwoModeParams, averages_one_body_exact


def params_for(n_total, chi=1.0, chi_tilde=0.0, v=0.0, pop_a=0.5, phase=0.0):
    mix = MixingState.from_population(pop_a, phase)
    return TwoModeParams(chi=chi, chi_tilde=chi_tilde, v=v, n_total=n_total, mix=mix)


def one_body_rates(p, gamma_a, gamma_b):
    return LossRates(
        np.array([gamma_a, 0, 0]), np.array([gamma_b, 0, 0]), 0.0,
        p.n_a_bar, p.n_b_bar,
    )


class TestNonHermitianStep:
    def test_zero_rates_preserve_norm(self):
        p = params_for(60)
        state = TrajectoryState.phase_state(60, p.mix)
        rates = LossRates.zero(30.0, 30.0)
        for _ in range(20):
            state = evolve_nonhermitian(state, p, rates, 0.01)
        assert state.norm_sq == pytest.approx(1.0, abs=1e-12)

    def test_single_fock_component_decays_exactly(self):
        p = params_for(10)
        coeffs = np.zeros(11, complex)
        coeffs[7] = 1.0  # n_a = 7, n_b = 3
        state = TrajectoryState(coeffs=coeffs, n_current=10, t=0.0)
        gamma_a = 0.3
        rates = one_body_rates(p, gamma_a, 0.0)
        state = evolve_nonhermitian(state, p, rates, 0.5, mode="exact")
        assert state.norm_sq == pytest.approx(math.exp(-gamma_a * 7 * 0.5), rel=1e-12)


class TestJumps:
    def test_two_atom_one_body_jump_shifts_relative_phase(self):
        # in the interaction picture, a single a loss on an N = 2 phase state
        # leaves the N = 1 phase state with relative phase shifted by
        # (chi + chi_tilde) t
        chi, cht = 0.8, 0.3
        p = params_for(2, chi=chi, chi_tilde=cht, pop_a=0.5)
        rates = one_body_rates(p, 0.05, 0.0)
        model = TwoModeJumpModel(p, rates, mode="constant")
        t_jump = 1.3
        state = TrajectoryState.phase_state(2, p.mix)
        state = evolve_nonhermitian(state, p, rates, t_jump, mode="constant")
        state.coeffs /= math.sqrt(state.norm_sq)
        state.norm_sq = 1.0
        state.t = t_jump
        after = model.apply_jump(state, "a", 1)
        interaction_picture = after.coeffs * np.exp(
            1j * model.phase_frequencies(1) * t_jump
        )
        shift = (chi + cht) * t_jump
        ref = TrajectoryState.phase_state(1, MixingState.from_population(0.5, shift))
        overlap = abs(np.vdot(ref.coeffs, interaction_picture))
        assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_crossed_jump_keeps_symmetric_phase(self):
        # with chi_tilde = 0 an ab loss leaves the relative phase untouched
        p = params_for(6, chi=0.9, chi_tilde=0.0)
        rates = LossRates(np.zeros(3), np.zeros(3), 0.02, 3.0, 3.0)
        model = TwoModeJumpModel(p, rates, mode="constant")
        state = TrajectoryState.phase_state(6, p.mix)
        after = model.apply_jump(state, "ab", 2)
        ref = TrajectoryState.phase_state(4, p.mix)
        assert abs(np.vdot(ref.coeffs, after.coeffs)) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_initial_channels_equally_likely(self):
        p = params_for(100)
        gamma = 0.01
        rates = one_body_rates(p, gamma, gamma)
        model = TwoModeJumpModel(p, rates, mode="exact")
        state = TrajectoryState.phase_state(100, p.mix)
        weights = model.channel_weights(state)
        assert weights[0] == pytest.approx(weights[3], rel=1e-12)

    def test_empty_system_raises(self):
        p = params_for(1)
        rates = one_body_rates(p, 0.1, 0.1)
        model = TwoModeJumpModel(p, rates, mode="exact")
        coeffs = np.array([0.0, 1.0], complex)  # one atom, in a
        state = TrajectoryState(coeffs=coeffs, n_current=1, t=0.0)
        with pytest.raises(EmptySystem):
            model.apply_jump(state, "b", 1)

    def test_phase_state_preserved_under_constant_rate_generators(self):
        # binomial magnitudes survive every jump and decay interval
        p = params_for(40, chi=0.7, chi_tilde=0.1, pop_a=0.35)
        na, nb = p.n_a_bar, p.n_b_bar
        rates = LossRates(
            np.array([3e-3, 2e-4 / na, 0.0]), np.array([2e-3, 1e-4 / nb, 0.0]),
            1e-4 / math.sqrt(na * nb), na, nb,
        )
        rng = np.random.default_rng(11)
        model = TwoModeJumpModel(p, rates, mode="constant")
        state = TrajectoryState.phase_state(40, p.mix)
        jumps = 0
        while jumps < 6 and state.n_current > 4:
            state = evolve_nonhermitian(state, p, rates, 0.8, mode="constant")
            state.coeffs /= math.sqrt(state.norm_sq)
            state.norm_sq = 1.0
            state, event = sample_jump(state, rng, model)
            jumps += 1
            n = state.n_current
            mags = np.abs(state.coeffs)
            ref = np.exp(0.5 * binomial_log_weights(n, p.mix.pop_a, np.arange(n + 1)))
            np.testing.assert_allclose(mags, ref, atol=1e-10)


class TestTrajectories:
    def test_seeded_runs_bit_reproducible(self):
        p = params_for(50, chi=0.9)
        rates = one_body_rates(p, 0.3, 0.2)  # rates high enough that jumps occur
        grid = np.linspace(0.01, 0.4, 7)

        def run(seed, idx):
            rng = np.random.Generator(np.random.Philox(key=[seed, idx]))
            rows, events = run_trajectory(p, rates, grid, rng, collect_events=True)
            return rows, events

        rows1, ev1 = run(7, 3)
        rows2, ev2 = run(7, 3)
        assert [e.time for e in ev1] == [e.time for e in ev2]
        for r1, r2 in zip(rows1, rows2):
            assert r1 == r2
        rows3, ev3 = run(8, 3)
        assert rows3 != rows1 or [e.time for e in ev3] != [e.time for e in ev1]

    def test_zero_rates_reproduce_pure_twisting(self):
        p = params_for(80, chi=1.1)
        rates = LossRates.zero(40.0, 40.0)
        grid = np.linspace(0.005, 0.08, 6)
        res = ensemble_observables(p, rates, grid, n_trajectories=100, seed=2)
        for j, t in enumerate(grid):
            ref = averages_one_body_exact(p, 0.0, 0.0, t)
            xi_ref = squeezing_parameter(moments_from_mode_averages(ref))
            assert res.xi2[j] == pytest.approx(xi_ref, rel=1e-10)
            assert res.xi2_err[j] < 1e-10


class TestEnsemble:
    def test_requires_minimum_statistics(self):
        p = params_for(20)
        with pytest.raises(InsufficientStatistics):
            ensemble_observables(p, LossRates.zero(10, 10), [0.1], n_trajectories=10)

    def test_one_body_ensemble_matches_exact_averages(self):
        n_total = 100
        p = params_for(n_total, chi=1.0)
        gamma = 0.05 * p.chi
        rates = one_body_rates(p, gamma, gamma)
        grid = np.linspace(1e-3, 3 * 3 ** (1 / 6) * n_total ** (-2 / 3), 12)
        res = ensemble_observables(p, rates, grid, n_trajectories=3000, seed=5)
        pulls = []
        for j, t in enumerate(grid):
            ref = averages_one_body_exact(p, gamma, gamma, t)
            xi_ref = squeezing_parameter(moments_from_mode_averages(ref))
            pulls.append((res.xi2[j] - xi_ref) / res.xi2_err[j])
        assert np.max(np.abs(pulls)) < 4.0

    def test_atom_number_follows_linear_law_while_losses_small(self):
        n_total = 200
        p = params_for(n_total, chi=0.5)
        na = n_total / 2.0
        rates = LossRates(np.array([0, 5e-4 / na, 0]), np.array([0, 5e-4 / na, 0]),
                          0.0, na, na)
        grid = np.array([0.02, 0.05, 0.1])
        res = ensemble_observables(p, rates, grid, n_trajectories=1000, seed=9,
                                   mode="constant")
        for j, t in enumerate(grid):
            expected = n_total * (1.0 - rates.atom_loss_rate * t)
            assert abs(res.n_mean[j] - expected) < 4.0 * max(res.n_mean_err[j], 1e-9) + 1e-9

    def test_jump_count_distribution_is_poissonian_in_constant_mode(self):
        # trace preservation in the waiting-time scheme: the number of jumps
        # by time t is Poisson with mean lam * t
        n_total = 60
        p = params_for(n_total, chi=0.3)
        na = n_total / 2.0
        rates = one_body_rates(p, 8e-3, 8e-3)
        lam = rates.lam
        t_end = 0.5
        counts = []
        for idx in range(800):
            rng = np.random.Generator(np.random.Philox(key=[21, idx]))
            _, events = run_trajectory(p, rates, [t_end], rng, mode="constant",
                                       collect_events=True)
            counts.append(len(events))
        mean = np.mean(counts)
        expected = lam * t_end
        stderr = math.sqrt(expected / len(counts))
        assert abs(mean - expected) < 4.0 * stderr
