"""Two-mode loss model against brute-force evolution and a master equation."""

import math
import warnings

import numpy as np
import pytest
from scipy.constants import hbar, pi

from spinsqueeze.errors import (
    DegenerateOptimum,
    LostFractionWarning,
    NonUnimodalWarning,
    UnstableMixture,
)
from spinsqueeze.spin import (
    MixingState,
    ModeAverages,
    moments_from_mode_averages,
    squeezing_parameter,
)
from spinsqueeze.twomode import (
    BestTime,
    LossRates,
    RateConstants,
    TwoModeParams,
    averages_constant_rate,
    averages_one_body_exact,
    best_time_search,
    drift_velocity,
    generating_exponent_derivatives,
    generating_function,
    optimize_trap,
    rates_from_wavefunctions,
    squeezing_short_time,
    stationary_chi,
    tf_symmetric,
)
from spinsqueeze.units import kg_from_amu, meters_from_bohr

from . import oracles

MASS_NA = kg_from_amu(23.0)
NA_A_S = meters_from_bohr(51.89 + 48.25)
NA_A_D = meters_from_bohr(51.89 - 48.25)
NA_RATES = RateConstants(k1_a=0.01, k1_b=0.01, k3_a=2e-42, k3_b=2e-42)


def xi2_at(p, rates, t):
    return squeezing_parameter(
        moments_from_mode_averages(averages_constant_rate(p, rates, t, warn=False))
    )


def symmetric_params(n_total, chi=1.0):
    mix = MixingState.from_population(0.5)
    return TwoModeParams(chi=chi, chi_tilde=0.0, v=0.0, n_total=n_total, mix=mix)


class TestLosslessOracle:
    @pytest.mark.parametrize("n_total", [10, 50, 200])
    def test_constant_rate_reduces_to_fock_evolution(self, n_total):
        mix = MixingState.from_population(0.37, rel_phase=0.3)
        p = TwoModeParams(chi=5.4e-3, chi_tilde=6e-4, v=1.3e-2, n_total=n_total, mix=mix)
        rates = LossRates.zero(p.n_a_bar, p.n_b_bar)
        state0 = oracles.phase_state(n_total, mix.c_a, mix.c_b)
        for t in np.linspace(1e-3, 3.0 / (p.chi * n_total ** (2 / 3)), 12):
            avg = averages_constant_rate(p, rates, t)
            ref = oracles.mode_averages_dict(
                state0 * oracles.twist_phases(n_total, p.chi, p.v, t)
            )
            for key, value in ref.items():
                assert abs(getattr(avg, key) - value) <= 1e-10 * max(1.0, abs(value))
            xi_ref = squeezing_parameter(moments_from_mode_averages(ModeAverages(**ref)))
            assert xi2_at(p, rates, t) == pytest.approx(xi_ref, rel=1e-10)

    def test_initial_time_is_phase_state(self):
        mix = MixingState.from_population(0.3, rel_phase=0.7)
        p = TwoModeParams(chi=1.0, chi_tilde=0.1, v=0.2, n_total=50, mix=mix)
        avg = averages_one_body_exact(p, 0.3, 0.2, 0.0)
        assert avg.ba == pytest.approx(np.conj(mix.c_b) * mix.c_a * 50, abs=1e-12)
        assert avg.n_a == pytest.approx(0.3 * 50)


class TestOneBodyExact:
    def test_matches_master_equation(self):
        n_total = 16
        g_a, g_b = 8e-3, 5e-3
        mix = MixingState.from_population(0.4, rel_phase=0.2)
        p = TwoModeParams(chi=0.11, chi_tilde=0.02, v=0.05, n_total=n_total, mix=mix)
        me = oracles.OneBodyLossMasterEquation(n_total, p.chi, p.chi_tilde, p.v, g_a, g_b)
        state = oracles.phase_state(n_total, mix.c_a, mix.c_b)
        for t in (2.0, 6.0):
            ref = me.mode_averages(me.evolve(state, t, n_steps=3000))
            avg = averages_one_body_exact(p, g_a, g_b, t)
            for key, value in ref.items():
                assert abs(getattr(avg, key) - value) <= 1e-11 * max(1.0, abs(value))

    def test_constant_rate_agrees_at_small_lost_fraction(self):
        # the two expressions coincide as the lost fraction goes to zero;
        # the residual scales like its square
        p = symmetric_params(100, chi=5e-3)
        g = 0.05 * p.chi
        rates = LossRates(np.array([g, 0, 0]), np.array([g, 0, 0]), 0.0, 50.0, 50.0)
        for t in (1.0, 5.0, 20.0):
            xi_exact = squeezing_parameter(
                moments_from_mode_averages(averages_one_body_exact(p, g, g, t))
            )
            xi_const = xi2_at(p, rates, t)
            lost = rates.atom_loss_rate * t
            assert abs(xi_const - xi_exact) / xi_exact < max(5.0 * lost**2, 1e-9)

    def test_atom_numbers_decay_exponentially(self):
        mix = MixingState.from_population(0.6)
        p = TwoModeParams(chi=1.0, chi_tilde=0.0, v=0.0, n_total=80, mix=mix)
        avg = averages_one_body_exact(p, 0.02, 0.05, 3.0)
        assert avg.n_a == pytest.approx(0.6 * 80 * math.exp(-0.06))
        assert avg.n_b == pytest.approx(0.4 * 80 * math.exp(-0.15))


class TestConstantRateInvariants:
    def _rates(self, n_total, scale=1e-6):
        rng = np.random.default_rng(5)
        na = nb = n_total / 2.0
        gamma_a = scale * rng.random(3) / np.array([1.0, na, na**2])
        gamma_b = scale * rng.random(3) / np.array([1.0, nb, nb**2])
        return LossRates(gamma_a, gamma_b, scale * 0.5 / na, na, nb)

    def test_total_number_linear_law(self):
        p = symmetric_params(1000)
        rates = self._rates(1000, scale=1e-4)
        for t in (0.01, 0.1, 0.5):
            avg = averages_constant_rate(p, rates, t, warn=False)
            expected = 1000 * (1.0 - rates.atom_loss_rate * t)
            assert avg.n_a + avg.n_b == pytest.approx(expected, rel=1e-10)

    def test_symmetric_per_order_rate_sum_matches_linear_law(self):
        # with equal species rates the decay reads N [1 - (sum_m Gamma^(m) + Gamma_ab) t]
        # with the per-species fractional rates Gamma^(m)
        n_total = 500
        na = n_total / 2.0
        gamma = np.array([1e-4, 1e-4 / na, 1e-4 / na**2])
        rates = LossRates(gamma, gamma, 1e-4 / na, na, na)
        per_order = rates.big_gamma_a.sum() + rates.big_gamma_ab
        assert rates.atom_loss_rate == pytest.approx(per_order, rel=1e-12)

    def test_symmetric_sz_variance_is_quarter_total(self):
        p = symmetric_params(400, chi=0.8)
        rates = self._rates(400, scale=1e-4)
        for t in (0.05, 0.3):
            avg = averages_constant_rate(p, rates, t, warn=False)
            m = moments_from_mode_averages(avg)
            assert m.var[2] == pytest.approx((avg.n_a + avg.n_b) / 4.0, rel=1e-10)

    def test_cauchy_schwarz_at_all_sampled_times(self):
        mix = MixingState.from_population(0.41, rel_phase=0.15)
        p = TwoModeParams(chi=1.0, chi_tilde=0.08, v=0.3, n_total=600, mix=mix)
        rates = self._rates(600, scale=2e-4)
        for t in np.linspace(1e-3, 0.4, 25):
            averages_constant_rate(p, rates, t, warn=False).validate(tol=1e-9)

    def test_generating_exponent_derivatives_match_numerical(self):
        # imaginary-displacement central differences of the exponent in the
        # common log-number shift
        rng = np.random.default_rng(42)
        count = 0
        for _ in range(100):
            n_total = int(rng.integers(50, 5000))
            mix = MixingState.from_population(rng.uniform(0.2, 0.8))
            p = TwoModeParams(
                chi=rng.uniform(0.1, 2.0), chi_tilde=rng.uniform(-0.1, 0.1),
                v=0.0, n_total=n_total, mix=mix,
            )
            rates = self._rates(n_total, scale=10 ** rng.uniform(-6, -3))
            t = rng.uniform(0.01, 1.0)
            beta = float(rng.choice([0.0, 1.0, 2.0]))
            phi, d1, d2 = generating_exponent_derivatives(beta, p, rates, t)
            h = 1e-6
            f_p = np.log(generating_function(beta, p, rates, t, sigma_shift=+1j * h))
            f_m = np.log(generating_function(beta, p, rates, t, sigma_shift=-1j * h))
            d1_num = (f_p - f_m) / (2j * h)
            assert abs(d1 - d1_num) <= 1e-9 * max(1.0, abs(d1))
            # second differences need a larger step against round-off
            h2 = 1e-4
            f_p2 = np.log(generating_function(beta, p, rates, t, sigma_shift=+1j * h2))
            f_m2 = np.log(generating_function(beta, p, rates, t, sigma_shift=-1j * h2))
            f_0 = np.log(generating_function(beta, p, rates, t))
            d2_num = (f_p2 - 2 * f_0 + f_m2) / (1j * h2) ** 2
            assert abs(d2 - d2_num) <= 1e-6 * max(1.0, abs(d2))
            count += 1
        assert count == 100

    def test_lost_fraction_warning(self):
        p = symmetric_params(100)
        g = np.array([0.3, 0.0, 0.0])
        rates = LossRates(g, g, 0.0, 50.0, 50.0)
        with pytest.warns(LostFractionWarning):
            averages_constant_rate(p, rates, 1.0)

    def test_crossed_losses_harmless_at_short_times(self):
        # an ab event rate whose same-species analogue would double the best
        # squeezing barely moves it
        n_total = 1_000_000
        na = n_total / 2.0
        p = symmetric_params(n_total)
        rates0 = LossRates.zero(na, na)
        base = best_time_search(lambda t: xi2_at(p, rates0, t), 1e-6, 1e-3)
        g1 = 3.0 * base.xi2_best / base.t_best
        one_body = LossRates(np.array([g1, 0, 0]), np.array([g1, 0, 0]), 0.0, na, na)
        crossed = LossRates(np.zeros(3), np.zeros(3), g1 * n_total / (2.0 * na**2), na, na)
        assert crossed.atom_loss_rate == pytest.approx(one_body.atom_loss_rate, rel=1e-12)
        with_one = best_time_search(lambda t: xi2_at(p, one_body, t), 1e-6, 1e-3)
        with_ab = best_time_search(lambda t: xi2_at(p, crossed, t), 1e-6, 1e-3)
        assert with_one.xi2_best > 1.5 * base.xi2_best
        assert with_ab.xi2_best == pytest.approx(base.xi2_best, rel=0.02)


class TestThomasFermiClosedForms:
    def test_chi_equals_spin_coupling_over_volume(self):
        omega = 2 * pi * 183.0
        tf = tf_symmetric(NA_A_S, NA_A_D, omega, 80_000, MASS_NA)
        g_d = 4.0 * pi * hbar**2 * NA_A_D / MASS_NA
        volume = 4.0 * pi / 3.0 * tf.tf_radius**3
        assert tf.chi == pytest.approx(g_d / (hbar * volume), rel=1e-12)

    def test_chi_number_scaling(self):
        omega = 2 * pi * 183.0
        chi_1 = tf_symmetric(NA_A_S, NA_A_D, omega, 40_000, MASS_NA).chi
        chi_2 = tf_symmetric(NA_A_S, NA_A_D, omega, 80_000, MASS_NA).chi
        assert chi_2 / chi_1 == pytest.approx(2.0 ** (-0.6), rel=1e-12)

    def test_rates_match_profile_moments(self):
        omega = 2 * pi * 183.0
        k = RateConstants(k1_a=0.01, k1_b=0.01, k2_a=3e-21, k2_b=3e-21,
                          k3_a=2e-42, k3_b=2e-42)
        tf = tf_symmetric(NA_A_S, NA_A_D, omega, 80_000, MASS_NA, k)
        # quadrature of the shared inverted-parabola profile
        r = np.linspace(0.0, tf.tf_radius, 200_001)
        dens = 15.0 / (8.0 * pi * tf.tf_radius**3) * (1.0 - (r / tf.tf_radius) ** 2)
        four_pi_r2 = 4.0 * pi * r**2
        mom2 = np.trapezoid(dens**2 * four_pi_r2, r)
        mom3 = np.trapezoid(dens**3 * four_pi_r2, r)
        n_half = 40_000.0
        assert tf.rates.big_gamma_a[1] == pytest.approx(n_half * k.k2_a * mom2, rel=1e-8)
        assert tf.rates.big_gamma_a[2] == pytest.approx(n_half**2 * k.k3_a * mom3, rel=1e-8)

    def test_unstable_mixture_raises(self):
        with pytest.raises(UnstableMixture):
            tf_symmetric(NA_A_S, -1e-12, 2 * pi * 100, 1000, MASS_NA)

    def test_separated_limit_collapses_scattering_combos(self):
        a_aa = meters_from_bohr(51.89)
        tf = tf_symmetric(a_aa, a_aa, 2 * pi * 183.0, 80_000, MASS_NA)
        # a_ab = 0 means a_s = a_d = a_aa; chi reduces to the per-cloud slope
        mu_single = tf.mu
        chi_expected = 0.8 * mu_single / (hbar * 80_000)
        assert tf.chi == pytest.approx(chi_expected, rel=1e-10)


class TestDriftVelocity:
    def test_symmetric_zero(self):
        p = symmetric_params(100)
        assert drift_velocity(2e-31, 2e-31, p) == 0.0

    def test_general_formula(self):
        mix = MixingState.from_population(0.4)
        p = TwoModeParams(chi=3e-3, chi_tilde=2e-4, v=0.0, n_total=1000, mix=mix)
        mu_a, mu_b = 1.1e-31, 1.0e-31
        v = drift_velocity(mu_a, mu_b, p)
        expected = ((mu_a - mu_b) / hbar - p.chi * (400 - 600)) / 2.0
        assert v == pytest.approx(expected, rel=1e-12)


class TestShortTimeLaw:
    def test_no_loss_identity(self):
        assert squeezing_short_time(0.01, 0.0, 5.0) == 0.01

    @pytest.mark.parametrize("ratio", [1e-3, 1e-2])
    def test_against_full_constant_rate(self, ratio):
        n_total = 10_000
        p = symmetric_params(n_total)
        g1 = ratio * p.chi
        rates = LossRates(np.array([g1, 0, 0]), np.array([g1, 0, 0]), 0.0,
                          n_total / 2, n_total / 2)
        assert rates.gamma_sq == pytest.approx(ratio * p.chi, rel=1e-12)
        best = best_time_search(lambda t: xi2_at(p, rates, t), 1e-5, 1.0)
        rates0 = LossRates.zero(n_total / 2, n_total / 2)
        xi0 = xi2_at(p, rates0, best.t_best)
        law = squeezing_short_time(xi0, rates.gamma_sq, best.t_best)
        assert law == pytest.approx(best.xi2_best, rel=0.05)

    def test_degradation_coefficient_matches_exact_expansion(self):
        # measured slope of xi^2(t) - xi0^2(t) against the tabulated gamma_sq
        n_total = 100_000
        p = symmetric_params(n_total)
        t_probe = 3 ** (1 / 6) * n_total ** (-2 / 3)
        for m in (1, 2, 3):
            g = np.zeros(3)
            g[m - 1] = 1e-5 / (n_total / 2) ** (m - 1) / t_probe
            rates = LossRates(g, g, 0.0, n_total / 2, n_total / 2)
            rates0 = LossRates.zero(n_total / 2, n_total / 2)
            slope = (xi2_at(p, rates, t_probe) - xi2_at(p, rates0, t_probe)) / t_probe
            assert 3.0 * slope / rates.gamma_sq == pytest.approx(1.0, abs=0.08)


class TestTrapOptimization:
    def test_sodium_frequency_and_bound(self):
        omega_opt, xi_inf = optimize_trap(NA_RATES, NA_A_S, NA_A_D, 80_000, MASS_NA)
        assert omega_opt / (2 * pi) == pytest.approx(183.0, rel=0.05)
        assert xi_inf == pytest.approx(1.3386e-3, rel=1e-3)

    def test_number_scaling_exponent(self):
        w1, _ = optimize_trap(NA_RATES, NA_A_S, NA_A_D, 80_000, MASS_NA)
        w2, _ = optimize_trap(NA_RATES, NA_A_S, NA_A_D, 160_000, MASS_NA)
        assert w2 / w1 == pytest.approx(2.0 ** (-1.0 / 3.0), rel=1e-12)

    def test_degenerate_optimum(self):
        with pytest.raises(DegenerateOptimum):
            optimize_trap(RateConstants(k1_a=0.01, k1_b=0.01), NA_A_S, NA_A_D, 1000, MASS_NA)

    def test_pipeline_approaches_bound_at_large_n(self):
        values = []
        for n_total in (80_000, 8_000_000):
            omega_opt, xi_inf = optimize_trap(NA_RATES, NA_A_S, NA_A_D, n_total, MASS_NA)
            tf = tf_symmetric(NA_A_S, NA_A_D, omega_opt, n_total, MASS_NA, NA_RATES)
            best = best_time_search(lambda t: xi2_at(tf.params, tf.rates, t), 1e-4, 10.0)
            values.append(best.xi2_best / xi_inf)
        assert values[0] > 1.05
        assert values[1] == pytest.approx(1.0, abs=0.02)


class TestBestTimeSearch:
    def test_matches_dense_scan(self):
        p = symmetric_params(1000)
        rates = LossRates.zero(500.0, 500.0)
        best = best_time_search(lambda t: xi2_at(p, rates, t), 1e-4, 0.3)
        ts = np.linspace(0.8 * best.t_best, 1.2 * best.t_best, 20_001)
        dense = min(xi2_at(p, rates, t) for t in ts)
        assert best.xi2_best <= dense + 1e-12
        assert abs(best.t_best - ts[np.argmin([xi2_at(p, rates, t) for t in ts])]) \
            <= 1e-4 * best.t_best + 2 * (ts[1] - ts[0])

    def test_scaling_exponents(self):
        ns = np.array([100, 1000, 10_000, 100_000, 1_000_000])
        t_bests, xi_bests = [], []
        for n_total in ns:
            p = symmetric_params(int(n_total))
            rates = LossRates.zero(n_total / 2, n_total / 2)
            t_est = 1.2 * n_total ** (-2.0 / 3.0)
            best = best_time_search(lambda t: xi2_at(p, rates, t), 0.1 * t_est, 10.0 * t_est)
            t_bests.append(best.t_best)
            xi_bests.append(best.xi2_best)
        slope_t = np.polyfit(np.log(ns), np.log(t_bests), 1)[0]
        slope_x = np.polyfit(np.log(ns), np.log(xi_bests), 1)[0]
        assert slope_t == pytest.approx(-2.0 / 3.0, abs=0.03)
        assert slope_x == pytest.approx(-2.0 / 3.0, abs=0.03)

    def test_flags_multiple_minima(self):
        def bumpy(t):
            return math.sin(20.0 * t) * 0.3 + 1.0 + 0.05 * t

        with pytest.warns(NonUnimodalWarning):
            best = best_time_search(bumpy, 0.01, 1.0)
        assert isinstance(best, BestTime)
        assert not best.unimodal
        assert len(best.minima) > 1

    def test_losses_pull_best_time_earlier(self):
        n_total = 20_000
        p = symmetric_params(n_total, chi=5.367e-3)
        rates0 = LossRates.zero(n_total / 2, n_total / 2)
        g2 = 7.6e-5
        heavy = LossRates(np.zeros(3), np.array([0.0, g2, 0.0]), 0.0,
                          n_total / 2, n_total / 2)
        no_loss = best_time_search(lambda t: xi2_at(p, rates0, t), 1e-4, 5.0)
        lossy = best_time_search(lambda t: xi2_at(p, heavy, t), 1e-4, 5.0)
        assert lossy.t_best < no_loss.t_best
