"""Stationary two-mode model of a bimodal condensate with particle losses.

The collective dynamics is generated by H = hbar*v*(N_a - N_b) +
(hbar*chi/4)(N_a - N_b)^2 acting on an initial phase state, while one-,
two- and three-body losses (plus crossed a-b losses) act through a master
equation.  Two analytic routes are provided:

* exact resummation of the quantum-jump expansion for pure one-body
  losses (``averages_one_body_exact``);
* the constant-loss-rate approximation for the full one/two/three-body
  plus crossed channel set (``averages_constant_rate``), valid while the
  lost fraction stays small.

Both produce the nine mode averages scored by :mod:`spinsqueeze.spin`.
The module also carries the Thomas-Fermi parameter closed forms for
symmetric overlapping condensates, the trap-frequency optimizer, the
short-time loss law, and the best-squeezing-time search.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar, pi
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateOptimum,
    OverflowGuard,
    LostFractionWarning,
    NonUnimodalWarning,
    UnstableMixture,
)
from .spin import MixingState, ModeAverages
from .special import decay_ratio, growth_ratio
from .units import harmonic_length

_ORDERS = np.array([1.0, 2.0, 3.0])


@dataclass(frozen=True)
class TwoModeParams:
    """Interaction parameters of the stationary two-mode Hamiltonian."""

    chi: float
    chi_tilde: float
    v: float
    n_total: int
    mix: MixingState

    @property
    def n_a_bar(self) -> float:
        return self.mix.pop_a * self.n_total

    @property
    def n_b_bar(self) -> float:
        return self.mix.pop_b * self.n_total


@dataclass(frozen=True)
class RateConstants:
    """Per-channel loss rate constants: 1/s, m^3/s and m^6/s."""

    k1_a: float = 0.0
    k1_b: float = 0.0
    k2_a: float = 0.0
    k2_b: float = 0.0
    k3_a: float = 0.0
    k3_b: float = 0.0
    k_ab: float = 0.0

    def __post_init__(self):
        for name in ("k1_a", "k1_b", "k2_a", "k2_b", "k3_a", "k3_b", "k_ab"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"rate constant {name} must be nonnegative")

    def species(self, which: str) -> tuple[float, float, float]:
        return tuple(getattr(self, f"k{m}_{which}") for m in (1, 2, 3))


@dataclass(frozen=True)
class LossRates:
    """Derived loss rates of the two-mode master equation.

    ``gamma_a[m-1]`` is the m-body coefficient gamma_a^(m) (1/s), likewise
    for b; ``gamma_ab`` the crossed channel.  ``big_gamma_*`` are the
    per-atom fractional rates Gamma_eps^(m) = n_bar^(m-1) * m * gamma^(m),
    ``lam`` the total event rate entering the constant-rate norm decay, and
    ``gamma_sq`` the combination sum_m m * Gamma_sq^(m) controlling the
    short-time squeezing degradation.
    """

    gamma_a: np.ndarray
    gamma_b: np.ndarray
    gamma_ab: float
    n_a_bar: float
    n_b_bar: float
    lam: float = field(init=False)
    big_gamma_a: np.ndarray = field(init=False)
    big_gamma_b: np.ndarray = field(init=False)
    big_gamma_ab: float = field(init=False)
    gamma_sq: float = field(init=False)
    atom_loss_rate: float = field(init=False)

    def __post_init__(self):
        ga = np.asarray(self.gamma_a, dtype=float)
        gb = np.asarray(self.gamma_b, dtype=float)
        if ga.shape != (3,) or gb.shape != (3,):
            raise ValueError("gamma arrays must have one entry per order m=1..3")
        na, nb = self.n_a_bar, self.n_b_bar
        n = na + nb
        powers_a = na ** _ORDERS
        powers_b = nb ** _ORDERS
        object.__setattr__(self, "gamma_a", ga)
        object.__setattr__(self, "gamma_b", gb)
        object.__setattr__(
            self, "lam", float(ga @ powers_a + gb @ powers_b + self.gamma_ab * na * nb)
        )
        object.__setattr__(
            self, "big_gamma_a", _ORDERS * ga * na ** (_ORDERS - 1.0)
        )
        object.__setattr__(
            self, "big_gamma_b", _ORDERS * gb * nb ** (_ORDERS - 1.0)
        )
        object.__setattr__(self, "big_gamma_ab", self.gamma_ab * math.sqrt(na * nb))
        # per-initial-atom loss rate; exact coefficient of the linear <N>(t) law
        loss = float(
            (_ORDERS * ga) @ powers_a + (_ORDERS * gb) @ powers_b
        ) + 2.0 * self.gamma_ab * na * nb
        object.__setattr__(self, "atom_loss_rate", loss / n if n > 0 else 0.0)
        gsq = float((_ORDERS**2 * ga) @ powers_a + (_ORDERS**2 * gb) @ powers_b)
        object.__setattr__(self, "gamma_sq", gsq / n if n > 0 else 0.0)

    @classmethod
    def zero(cls, n_a_bar: float, n_b_bar: float) -> "LossRates":
        return cls(np.zeros(3), np.zeros(3), 0.0, n_a_bar, n_b_bar)


def rates_from_wavefunctions(k: RateConstants, phi_a, phi_b, n_a_bar, n_b_bar) -> LossRates:
    """Loss rates gamma^(m) = (K_m/m) integral |phi|^(2m) from condensate modes.

    ``phi_a`` and ``phi_b`` are WaveField objects (normalized single-particle
    modes); the crossed rate uses gamma_ab = (K_ab/2) integral of the density
    product.
    """
    from .meanfield import require_same_grid

    require_same_grid(phi_a, phi_b)
    w = phi_a.grid.weights
    dens_a = np.abs(phi_a.amplitude) ** 2
    dens_b = np.abs(phi_b.amplitude) ** 2
    gamma_a = np.array(
        [(k.species("a")[m - 1] / m) * float(w @ dens_a**m) for m in (1, 2, 3)]
    )
    gamma_b = np.array(
        [(k.species("b")[m - 1] / m) * float(w @ dens_b**m) for m in (1, 2, 3)]
    )
    gamma_ab = 0.5 * k.k_ab * float(w @ (dens_a * dens_b))
    return LossRates(gamma_a, gamma_b, gamma_ab, n_a_bar, n_b_bar)


# ---------------------------------------------------------------------------
# Thomas-Fermi closed forms for symmetric overlapping condensates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetricTF:
    """Thomas-Fermi parameters of a symmetric overlapping mixture."""

    mu: float
    chi: float
    tf_radius: float
    params: TwoModeParams
    rates: LossRates


def tf_symmetric(
    a_s: float,
    a_d: float,
    omega_bar: float,
    n_total: int,
    mass: float,
    rate_constants: RateConstants | None = None,
    rel_phase: float = 0.0,
) -> SymmetricTF:
    """Closed-form mu, chi and loss rates for a_aa = a_bb, a_ab = (a_s - a_d)/2...

    ``a_s = a_aa + a_ab`` and ``a_d = a_aa - a_ab`` are the sum and
    difference scattering lengths; stability requires a_d > 0.  Each
    condensate holds N/2 atoms and shares the common inverted-parabola
    profile, so

        mu  = (hbar w / 2) (15 N a_s / (2 a_ho))^(2/5)
        chi = (2^(3/5) 3^(2/5) / 5^(3/5)) (hbar/M)^(-1/5) w^(6/5) N^(-3/5) a_d a_s^(-3/5)

    and the m-body rates follow from the Thomas-Fermi density moments.
    """
    if a_d <= 0.0:
        raise UnstableMixture("need a_ab < a_aa = a_bb for a stable overlapping mixture")
    a_ho = harmonic_length(mass, omega_bar)
    mu = 0.5 * hbar * omega_bar * (7.5 * n_total * a_s / a_ho) ** 0.4
    chi = (
        (2.0**0.6 * 3.0**0.4 / 5.0**0.6)
        * (hbar / mass) ** (-0.2)
        * omega_bar**1.2
        * n_total ** (-0.6)
        * a_d
        * a_s ** (-0.6)
    )
    radius = math.sqrt(2.0 * mu / (mass * omega_bar**2))
    mix = MixingState.from_population(0.5, rel_phase)
    params = TwoModeParams(chi=chi, chi_tilde=0.0, v=0.0, n_total=n_total, mix=mix)

    n_half = 0.5 * n_total
    if rate_constants is None:
        rates = LossRates.zero(n_half, n_half)
    else:
        # density moments of the shared normalized profile (15/8 pi R^3)(1 - r^2/R^2)
        dens2 = 15.0 / (14.0 * pi * radius**3)
        dens3 = (3375.0 * 64.0 / (512.0 * 315.0)) / (pi**2 * radius**6)
        gammas = []
        for which in ("a", "b"):
            k1, k2, k3 = rate_constants.species(which)
            gammas.append(np.array([k1, 0.5 * k2 * dens2, (k3 / 3.0) * dens3]))
        gamma_ab = 0.5 * rate_constants.k_ab * dens2
        rates = LossRates(gammas[0], gammas[1], gamma_ab, n_half, n_half)
    return SymmetricTF(mu=mu, chi=chi, tf_radius=radius, params=params, rates=rates)


def stationary_chi(d_mu_a_a, d_mu_b_b, d_mu_a_b, d_mu_b_a):
    """(chi, chi_tilde) from chemical-potential derivatives.

    Arguments are (d mu_a/d N_a, d mu_b/d N_b, d mu_a/d N_b, d mu_b/d N_a)
    evaluated at the mean atom numbers.
    """
    chi = (d_mu_a_a + d_mu_b_b - d_mu_a_b - d_mu_b_a) / (2.0 * hbar)
    chi_tilde = (d_mu_a_a - d_mu_b_b) / (2.0 * hbar)
    return chi, chi_tilde


def drift_velocity(mu_a: float, mu_b: float, p: TwoModeParams) -> float:
    """Mean-spin phase drift v for initial atom number N = p.n_total."""
    n_bar = p.n_a_bar + p.n_b_bar
    return (
        (mu_a - mu_b) / hbar
        - p.chi * (p.n_a_bar - p.n_b_bar)
        + p.chi_tilde * (p.n_total - n_bar)
    ) / 2.0


# ---------------------------------------------------------------------------
# Exact averages for pure one-body losses
# ---------------------------------------------------------------------------


def _survival_kernel(x, gamma, t):
    """e^{-x t} + gamma t (1 - e^{-x t})/(x t), the per-atom resummed factor."""
    xt = complex(x) * t
    if abs(xt) < 1e-6:
        series = 1.0 - xt / 2.0 + xt * xt / 6.0
        return np.exp(-xt) + gamma * t * series
    return np.exp(-xt) + gamma * t * (1.0 - np.exp(-xt)) / xt


def _l_coherence(beta, p: TwoModeParams, gamma_a, gamma_b, t):
    """Resummed one-body coherence kernel L_beta."""
    x_a = gamma_a + 1j * beta * (p.chi + p.chi_tilde)
    x_b = gamma_b - 1j * beta * (p.chi - p.chi_tilde)
    return np.exp(1j * beta * p.chi_tilde * t) * (
        p.mix.pop_a * _survival_kernel(x_a, gamma_a, t)
        + p.mix.pop_b * _survival_kernel(x_b, gamma_b, t)
    )


def averages_one_body_exact(p: TwoModeParams, gamma_a: float, gamma_b: float, t: float) -> ModeAverages:
    """Exact mode averages under twisting plus one-body losses only."""
    n = p.n_total
    ca, cb = p.mix.c_a, p.mix.c_b
    pa, pb = p.mix.pop_a, p.mix.pop_b
    ea, eb = math.exp(-gamma_a * t), math.exp(-gamma_b * t)

    l1 = _l_coherence(1.0, p, gamma_a, gamma_b, t)
    lm1 = _l_coherence(-1.0, p, gamma_a, gamma_b, t)
    l2 = _l_coherence(2.0, p, gamma_a, gamma_b, t)

    def power(z, k):
        return np.exp(k * np.log(z)) if z != 0 else 0.0

    rot = np.exp(-2j * p.v * t)
    ba = np.conj(cb) * ca * rot * n * math.exp(-0.5 * (gamma_a + gamma_b) * t) * power(l1, n - 1)
    bbba = (
        pb * np.conj(cb) * ca * rot * n * (n - 1)
        * np.exp(1j * p.chi * t)
        * math.exp(-0.5 * (gamma_a + 3.0 * gamma_b) * t)
        * power(l1, n - 2)
    )
    aaab = (
        pa * np.conj(ca) * cb / rot * n * (n - 1)
        * np.exp(1j * p.chi * t)
        * math.exp(-0.5 * (3.0 * gamma_a + gamma_b) * t)
        * power(lm1, n - 2)
    )
    bbaa = (
        np.conj(cb) ** 2 * ca**2 * rot**2 * n * (n - 1)
        * math.exp(-(gamma_a + gamma_b) * t)
        * power(l2, n - 2)
    )
    return ModeAverages(
        n_a=pa * n * ea,
        n_b=pb * n * eb,
        ba=complex(ba),
        aaaa=pa**2 * n * (n - 1) * ea**2,
        bbbb=pb**2 * n * (n - 1) * eb**2,
        baab=pa * pb * n * (n - 1) * ea * eb,
        bbaa=complex(bbaa),
        bbba=complex(bbba),
        aaab=complex(aaab),
    )


# ---------------------------------------------------------------------------
# Constant-loss-rate averages (one/two/three-body plus crossed channel)
# ---------------------------------------------------------------------------


def _generating_terms(beta, chi, chi_tilde, t, gamma_a, gamma_b, gamma_ab, pa, pb, na, nb):
    """Value and first two number-weighted derivatives of the jump generating function.

    Returns (Phi, Phi', Phi'') where Phi is the exponent of the Poisson
    resummation over jump channels and the primes are derivatives with
    respect to a common log-number shift, needed because the averages carry
    (N - N_lost)-style prefactors.
    """
    bracket = pa * np.exp(-1j * beta * (chi + chi_tilde) * t) + pb * np.exp(
        1j * beta * (chi - chi_tilde) * t
    )
    phi = phi1 = phi2 = 0.0 + 0.0j
    for m in (1, 2, 3):
        u = gamma_a[m - 1] * t * decay_ratio(m * beta * (chi + chi_tilde) * t) / bracket**m
        w = gamma_b[m - 1] * t * growth_ratio(m * beta * (chi - chi_tilde) * t) / bracket**m
        term = na**m * u + nb**m * w
        phi += term
        phi1 += m * term
        phi2 += m * m * term
    z = gamma_ab * t * decay_ratio(2.0 * beta * chi_tilde * t) / bracket**2
    cross = na * nb * z
    phi += cross
    phi1 += 2.0 * cross
    phi2 += 4.0 * cross
    return phi, phi1, phi2


def averages_constant_rate(
    p: TwoModeParams, rates: LossRates, t: float, warn: bool = True
) -> ModeAverages:
    """Mode averages in the constant-loss-rate approximation.

    Valid while the lost fraction of atoms stays small; a warning fires
    above 10% and the result is unreliable beyond ~50%.
    """
    lost = rates.atom_loss_rate * t
    if warn and lost > 0.1:
        warnings.warn(
            f"lost fraction {lost:.2f} strains the constant-loss-rate approximation",
            LostFractionWarning,
            stacklevel=2,
        )

    n = p.n_total
    ca, cb = p.mix.c_a, p.mix.c_b
    pa, pb = p.mix.pop_a, p.mix.pop_b
    na, nb = p.n_a_bar, p.n_b_bar
    chi, cht = p.chi, p.chi_tilde
    ga, gb, gab = rates.gamma_a, rates.gamma_b, rates.gamma_ab
    lam = rates.lam

    def terms(beta, swapped=False):
        if swapped:
            return _generating_terms(beta, chi, -cht, t, gb, ga, gab, pb, pa, nb, na)
        return _generating_terms(beta, chi, cht, t, ga, gb, gab, pa, pb, na, nb)

    def log_power(z, k):
        if z == 0:
            return -np.inf
        return k * np.log(complex(z))

    def bounded_exp(z):
        z = complex(z)
        if z.real > 700.0:
            raise OverflowGuard(
                "constant-rate generating function overflows; the "
                "approximation has left its validity window at this time"
            )
        return np.exp(z)

    phi0, d0, dd0 = terms(0.0)
    weight0 = np.exp(-lam * t + phi0)
    single0 = (n - d0) * weight0
    double0 = ((n - d0) * (n - 1.0 - d0) + dd0) * weight0

    phi1, d1, dd1 = terms(1.0)
    p1 = pa * np.exp(-1j * chi * t) + pb * np.exp(1j * chi * t)
    ba = np.conj(cb) * ca * bounded_exp(
        -(2j * p.v + lam) * t + log_power(p1, n - 1) + phi1
    ) * (n - d1)
    bbba = pb * np.conj(cb) * ca * bounded_exp(
        -(2j * p.v + lam) * t + log_power(p1, n - 2) + 1j * chi * t + phi1
    ) * ((n - d1) * (n - 1.0 - d1) + dd1)

    psi1, e1, ee1 = terms(1.0, swapped=True)
    q1 = pb * np.exp(-1j * chi * t) + pa * np.exp(1j * chi * t)
    aaab = pa * np.conj(ca) * cb * bounded_exp(
        (2j * p.v - lam) * t + log_power(q1, n - 2) + 1j * chi * t + psi1
    ) * ((n - e1) * (n - 1.0 - e1) + ee1)

    phi2, d2, dd2 = terms(2.0)
    p2 = pa * np.exp(-2j * chi * t) + pb * np.exp(2j * chi * t)
    bbaa = np.conj(cb) ** 2 * ca**2 * bounded_exp(
        -(4j * p.v + lam) * t + log_power(p2, n - 2) + phi2
    ) * ((n - d2) * (n - 1.0 - d2) + dd2)

    return ModeAverages(
        n_a=float((pa * single0).real),
        n_b=float((pb * single0).real),
        ba=complex(ba),
        aaaa=float((pa**2 * double0).real),
        bbbb=float((pb**2 * double0).real),
        baab=float((pa * pb * double0).real),
        bbaa=complex(bbaa),
        bbba=complex(bbba),
        aaab=complex(aaab),
    )


def generating_function(beta, p: TwoModeParams, rates: LossRates, t, sigma_shift=0.0):
    """F_beta evaluated with both log-number arguments shifted by sigma_shift.

    Exposed for derivative cross-checks: the analytic Phi' returned by the
    averages equals d/d(sigma_shift) log F at zero shift.
    """
    scale = np.exp(sigma_shift)
    phi, _, _ = _generating_terms(
        beta, p.chi, p.chi_tilde, t,
        rates.gamma_a, rates.gamma_b, rates.gamma_ab,
        p.mix.pop_a, p.mix.pop_b, p.n_a_bar * scale, p.n_b_bar * scale,
    )
    return np.exp(phi)


def generating_exponent_derivatives(beta, p: TwoModeParams, rates: LossRates, t):
    """(Phi, Phi', Phi'') of the constant-rate generating exponent."""
    return _generating_terms(
        beta, p.chi, p.chi_tilde, t,
        rates.gamma_a, rates.gamma_b, rates.gamma_ab,
        p.mix.pop_a, p.mix.pop_b, p.n_a_bar, p.n_b_bar,
    )


# ---------------------------------------------------------------------------
# Short-time law, trap optimization, best-time search
# ---------------------------------------------------------------------------


def squeezing_short_time(xi0_sq: float, gamma_sq: float, t: float) -> float:
    """Large-N short-time degradation: xi^2 = xi0^2 + Gamma_sq t / 3."""
    return xi0_sq * (1.0 + gamma_sq * t / (3.0 * xi0_sq))


def optimize_trap(
    k: RateConstants, a_s: float, a_d: float, n_total: float, mass: float
) -> tuple[float, float]:
    """Optimal mean trap frequency and the infinite-N squeezing bound.

    The one-/three-body trade-off fixes
    w_opt = (2^(19/12) 7^(5/12) pi^(5/6) / 15^(1/3)) (hbar/M) sqrt(a_s) N^(-1/3) (K1/K3)^(5/12);
    two-body losses are frequency-independent and only enter the bound.
    """
    k1 = 0.5 * (k.k1_a + k.k1_b)
    k3 = 0.5 * (k.k3_a + k.k3_b)
    k2 = 0.5 * (k.k2_a + k.k2_b)
    if k1 <= 0.0 or k3 <= 0.0:
        raise DegenerateOptimum(
            "no interior optimum: K1 and K3 must both be positive "
            "(the best-squeezing frequency otherwise runs to a boundary)"
        )
    if a_d <= 0.0:
        raise UnstableMixture("squeezing bound needs a_d > 0")
    omega_opt = (
        (2.0 ** (19.0 / 12.0) * 7.0 ** (5.0 / 12.0) * pi ** (5.0 / 6.0) / 15.0 ** (1.0 / 3.0))
        * (hbar / mass)
        * math.sqrt(a_s)
        * n_total ** (-1.0 / 3.0)
        * (k1 / k3) ** (5.0 / 12.0)
    )
    xi_inf = (
        (5.0 * math.sqrt(3.0) * mass / (28.0 * pi * hbar)) ** (2.0 / 3.0)
        * (math.sqrt(3.5 * k1 * k3 / a_d**2) + k2 / a_d) ** (2.0 / 3.0)
    )
    return omega_opt, xi_inf


@dataclass(frozen=True)
class BestTime:
    """Result of a best-squeezing-time search."""

    t_best: float
    xi2_best: float
    minima: tuple[tuple[float, float], ...]
    unimodal: bool


def best_time_search(
    xi2_of_t,
    t_lo: float,
    t_hi: float,
    n_coarse: int = 80,
    rel_tol: float = 1e-5,
) -> BestTime:
    """Locate the minimum of xi^2(t) on [t_lo, t_hi].

    A log-spaced coarse scan brackets candidate minima; each bracket is
    refined by bounded scalar minimization.  More than one interior local
    minimum raises a NonUnimodalWarning and all refined minima are reported.
    Times where the mean spin has collapsed (ZeroMeanSpin) or the analytics
    left their validity window (OverflowGuard) score as +inf.
    """
    from .errors import ZeroMeanSpin

    raw = xi2_of_t

    def xi2_of_t(t):  # noqa: F811 - guarded view of the callable
        try:
            return raw(t)
        except (OverflowGuard, ZeroMeanSpin):
            return np.inf

    ts = np.geomspace(t_lo, t_hi, n_coarse)
    vals = np.array([xi2_of_t(t) for t in ts])
    interior = np.flatnonzero(
        (vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])
    ) + 1
    if interior.size == 0:
        interior = np.array([int(np.argmin(vals))])
    minima = []
    for idx in interior:
        lo = ts[max(idx - 1, 0)]
        hi = ts[min(idx + 1, n_coarse - 1)]
        if lo == hi:
            minima.append((float(ts[idx]), float(vals[idx])))
            continue
        res = minimize_scalar(
            xi2_of_t, bounds=(lo, hi), method="bounded",
            options={"xatol": rel_tol * ts[idx]},
        )
        minima.append((float(res.x), float(res.fun)))
    minima.sort(key=lambda pair: pair[1])
    unimodal = len(minima) == 1
    if not unimodal:
        warnings.warn(
            f"{len(minima)} local minima found in best-time scan",
            NonUnimodalWarning,
            stacklevel=2,
        )
    t_best, xi2_best = minima[0]
    return BestTime(t_best, xi2_best, tuple(minima), unimodal)
