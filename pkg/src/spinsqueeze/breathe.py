"""Breathe-together analytics: mixing ratio, breathing mode, closed-form twist field.

For a_ab below both intra-species scattering lengths there is one mixing
ratio at which both components feel the same mean field and share a
single scaling wave function.  Around that solution the relative phase
dynamics reduces to a zero-energy mode growing like the 1/L^3 time
integral plus one breathing mode of frequency Omega_5; together they give
the twist field chi_d(r, t) in closed form, with chi_s = chi_0 =
(|c_b|^2 - |c_a|^2) chi_d.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .errors import NoBreatheTogether, OutsideCondensate, ShallowTrapWarning
from .meanfield import CouplingSet, TrapConfig
from .scaling import ScalingState
from .spin import MixingState
from .units import harmonic_length

DEEP_TF_GATE = 20.0  # mu_bar / (hbar omega) below this draws a warning


@dataclass(frozen=True)
class BreatheConfig:
    """Mixing numbers and reference condensate of a breathe-together run."""

    n_total: int
    n_a_bar: float
    n_b_bar: float
    g_common: float
    omega: float
    mu_bar: float
    r0: float

    @property
    def mix(self) -> MixingState:
        return MixingState.from_population(self.n_a_bar / self.n_total)


def solve_mixing(couplings: CouplingSet, n_total: int, trap: TrapConfig) -> BreatheConfig:
    """Mixing ratio equalizing the mean field of both components.

    N_a (g_aa - g_ab) = N_b (g_bb - g_ab) requires a_ab below both
    intra-species lengths; otherwise NoBreatheTogether.  The reference
    chemical potential mu_bar and TF radius describe the original N-atom
    condensate in state a, before the mixing pulse.
    """
    g = couplings
    denom = g.g_aa + g.g_bb - 2.0 * g.g_ab
    if denom <= 0.0:
        raise NoBreatheTogether("requires g_aa + g_bb > 2 g_ab")
    n_a_bar = n_total * (g.g_bb - g.g_ab) / denom
    if not 0.0 < n_a_bar < n_total:
        raise NoBreatheTogether(
            f"mean-field balance puts N_a at {n_a_bar:.1f} of {n_total}"
        )
    n_b_bar = n_total - n_a_bar
    g_common = (n_a_bar * g.g_aa + n_b_bar * g.g_ab) / n_total
    a_ho = harmonic_length(trap.mass, trap.omega)
    a_aa = g.g_aa * trap.mass / (4.0 * math.pi * hbar**2)
    mu_bar = 0.5 * hbar * trap.omega * (15.0 * n_total * a_aa / a_ho) ** 0.4
    if mu_bar < DEEP_TF_GATE * hbar * trap.omega:
        warnings.warn(
            f"mu/hbar omega = {mu_bar / (hbar * trap.omega):.1f} < {DEEP_TF_GATE:.0f}: "
            "the closed-form twist field is only tested deep in the "
            "Thomas-Fermi regime",
            ShallowTrapWarning,
            stacklevel=2,
        )
    r0 = math.sqrt(2.0 * mu_bar / (trap.mass * trap.omega**2))
    return BreatheConfig(
        n_total=n_total, n_a_bar=n_a_bar, n_b_bar=n_b_bar, g_common=g_common,
        omega=trap.omega, mu_bar=mu_bar, r0=r0,
    )


def omega5(cfg: BreatheConfig, couplings: CouplingSet) -> float:
    """Frequency of the relative-density breathing mode."""
    g = couplings
    ratio = (
        cfg.n_a_bar * cfg.n_b_bar / cfg.n_total**2
        * (g.g_aa + g.g_bb - 2.0 * g.g_ab) / g.g_aa
    )
    return math.sqrt(5.0 * ratio) * cfg.omega


@dataclass(frozen=True)
class BreathingAmplitudes:
    """Complex mode pair (A, B) of the relative-phase breathing dynamics."""

    calA: complex
    calB: complex
    omega5: float

    @classmethod
    def initial(cls, omega5: float) -> "BreathingAmplitudes":
        return cls(calA=1.0 + 0.0j, calB=1.0 + 0.0j, omega5=omega5)


def evolve_breathing(amp: BreathingAmplitudes, state: ScalingState, g_ratio: float,
                     omega: float, dt: float) -> tuple[BreathingAmplitudes, ScalingState]:
    """Joint RK4 step of i Adot = (W5/L^2) B, i Bdot = (W5/L^3) A with the scale ODE."""
    w5 = amp.omega5

    def rhs(y):
        l, l_dot, a_re, a_im, b_re, b_im = y
        da = -1j * w5 / l**2 * complex(b_re, b_im)
        db = -1j * w5 / l**3 * complex(a_re, a_im)
        return np.array([
            l_dot,
            g_ratio * omega**2 / l**4 - omega**2 * l,
            da.real, da.imag, db.real, db.imag,
        ])

    y = np.array([
        state.l, state.l_dot,
        amp.calA.real, amp.calA.imag, amp.calB.real, amp.calB.imag,
    ])
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    y = y + dt / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
    return (
        BreathingAmplitudes(complex(y[2], y[3]), complex(y[4], y[5]), w5),
        ScalingState(l=y[0], l_dot=y[1], eta=state.eta),
    )


@dataclass(frozen=True)
class BreatheTrajectory:
    """Dense breathe-together solution feeding the closed-form twist field."""

    cfg: BreatheConfig
    g_ratio: float
    t: np.ndarray
    l: np.ndarray
    l_dot: np.ndarray
    im_b: np.ndarray
    int_inv_l3: np.ndarray
    omega5: float


def solve_breathe_dynamics(cfg: BreatheConfig, couplings: CouplingSet, t_grid,
                           substeps_per_period: int = 800) -> BreatheTrajectory:
    """Integrate scale factor and breathing amplitudes over ``t_grid``."""
    g_ratio = cfg.g_common / couplings.g_aa
    w5 = omega5(cfg, couplings)
    amp = BreathingAmplitudes.initial(w5)
    state = ScalingState.initial()
    dt_max = 2.0 * math.pi / cfg.omega / substeps_per_period

    t_now = float(t_grid[0])
    if t_now != 0.0:
        raise ValueError("breathe-together runs start at the mixing pulse, t = 0")
    ls, lds, im_bs, integrals = [state.l], [state.l_dot], [amp.calB.imag], [0.0]
    running = 0.0
    for t_next in np.asarray(t_grid)[1:]:
        span = float(t_next) - t_now
        n_sub = max(1, int(np.ceil(span / dt_max)))
        dt = span / n_sub
        for _ in range(n_sub):
            prev_inv = 1.0 / state.l**3
            amp, state = evolve_breathing(amp, state, g_ratio, cfg.omega, dt)
            running += 0.5 * dt * (prev_inv + 1.0 / state.l**3)
        t_now = float(t_next)
        ls.append(state.l)
        lds.append(state.l_dot)
        im_bs.append(amp.calB.imag)
        integrals.append(running)
    return BreatheTrajectory(
        cfg=cfg, g_ratio=g_ratio, t=np.asarray(t_grid, dtype=float),
        l=np.array(ls), l_dot=np.array(lds), im_b=np.array(im_bs),
        int_inv_l3=np.array(integrals), omega5=w5,
    )


def chi_d_analytic(r, index: int, traj: BreatheTrajectory, couplings: CouplingSet,
                   clip: bool = False):
    """Closed-form twist field chi_d(r, t_index) on radii ``r``.

    chi_d = -(1/2 hbar)(2 mu/5N)((g_aa + g_bb - 2 g_ab)/g_aa)
            [ int_0^t dt'/L^3 + (5/2)(Im B/W5)((r/(L R0))^2 - 3/5) ].
    Radii beyond the scaled condensate edge raise OutsideCondensate unless
    ``clip`` masks them to zero instead.
    """
    cfg = traj.cfg
    g = couplings
    r = np.asarray(r, dtype=float)
    l_now = traj.l[index]
    outside = r > l_now * cfg.r0
    if np.any(outside):
        if not clip:
            raise OutsideCondensate("radius beyond the scaled Thomas-Fermi edge")
    prefactor = -(1.0 / (2.0 * hbar)) * (2.0 * cfg.mu_bar / (5.0 * cfg.n_total)) * (
        (g.g_aa + g.g_bb - 2.0 * g.g_ab) / g.g_aa
    )
    bracket = traj.int_inv_l3[index] + 2.5 * (traj.im_b[index] / traj.omega5) * (
        (r / (l_now * cfg.r0)) ** 2 - 0.6
    )
    chi = prefactor * bracket
    if clip:
        chi = np.where(outside, 0.0, chi)
    return chi


def chi_spatial_average(index: int, traj: BreatheTrajectory, couplings: CouplingSet) -> float:
    """Density-weighted spatial average of chi_d; the Im B term integrates to zero."""
    cfg = traj.cfg
    g = couplings
    prefactor = -(1.0 / (2.0 * hbar)) * (2.0 * cfg.mu_bar / (5.0 * cfg.n_total)) * (
        (g.g_aa + g.g_bb - 2.0 * g.g_ab) / g.g_aa
    )
    return prefactor * traj.int_inv_l3[index]
