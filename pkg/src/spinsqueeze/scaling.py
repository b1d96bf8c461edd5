"""Scaling dynamics of Thomas-Fermi condensates and the trap-separation ramp.

When the mean field changes suddenly (a mixing pulse or a cloud
separation), a deep-TF condensate keeps its inverted-parabola shape and
only breathes: the radius scales by L(t) governed by a one-dimensional
ODE, and the wave function picks up the phase eta(t) plus the quadratic
r^2 Ldot/L flow phase.  The 3D isotropic and quasi-2D in-plane variants
are integrated here with a classical RK4 step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar


@dataclass(frozen=True)
class ScalingState:
    """Scale factor L, its rate, and the accumulated phase eta."""

    l: float
    l_dot: float
    eta: float

    def __post_init__(self):
        if self.l <= 0.0:
            raise ValueError("scale factor must stay positive")

    @classmethod
    def initial(cls) -> "ScalingState":
        return cls(l=1.0, l_dot=0.0, eta=0.0)


def _rk4(state: ScalingState, accel, eta_rate, dt: float) -> ScalingState:
    def rhs(y):
        l, l_dot, _ = y
        return np.array([l_dot, accel(l), eta_rate(l)])

    y = np.array([state.l, state.l_dot, state.eta])
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return ScalingState(l=y[0], l_dot=y[1], eta=y[2])


def scaling_evolve_3d(state: ScalingState, g_ratio: float, omega: float, dt: float,
                      mu_bar: float = 0.0) -> ScalingState:
    """One RK4 step of Lddot = g_ratio w^2/L^4 - w^2 L, etadot = g_ratio mu/(hbar L^3)."""
    return _rk4(
        state,
        lambda l: g_ratio * omega**2 / l**4 - omega**2 * l,
        lambda l: g_ratio * mu_bar / (hbar * l**3),
        dt,
    )


def scaling_evolve_2d(state: ScalingState, n_ratio: float, g_ratio: float,
                      omega_perp: float, dt: float, mu_bar: float = 0.0) -> ScalingState:
    """Quasi-2D variant: Lddot = (N_eps/N)(g_ee/g_aa) w^2/L^3 - w^2 L."""
    kappa = n_ratio * g_ratio
    return _rk4(
        state,
        lambda l: kappa * omega_perp**2 / l**3 - omega_perp**2 * l,
        lambda l: kappa * mu_bar / (hbar * l**2),
        dt,
    )


def effective_energy_3d(state: ScalingState, g_ratio: float, omega: float) -> float:
    """Conserved energy of the 3D scaling motion (per unit mass-scale)."""
    return (
        0.5 * state.l_dot**2
        + 0.5 * omega**2 * state.l**2
        + g_ratio * omega**2 / (3.0 * state.l**3)
    )


def effective_energy_2d(state: ScalingState, kappa: float, omega_perp: float) -> float:
    return (
        0.5 * state.l_dot**2
        + 0.5 * omega_perp**2 * state.l**2
        + 0.5 * kappa * omega_perp**2 / state.l**2
    )


@dataclass(frozen=True)
class ScalingTrajectory:
    """Dense scaling solution on a time grid, with the 1/L^3 time integral."""

    t: np.ndarray
    l: np.ndarray
    l_dot: np.ndarray
    eta: np.ndarray
    int_inv_l3: np.ndarray


def solve_scaling(t_grid, accel_kind: str, omega: float, mu_bar: float = 0.0,
                  g_ratio: float = 1.0, n_ratio: float = 1.0,
                  substeps_per_period: int = 400) -> ScalingTrajectory:
    """Integrate the scaling ODE densely over ``t_grid``.

    ``accel_kind`` is "3d" or "2d".  The cumulative integral of 1/L^3 is
    accumulated with the trapezoid rule on the internal RK4 substeps, so it
    shares the discretization of the trajectory itself.
    """
    stepper = {
        "3d": lambda s, dt: scaling_evolve_3d(s, g_ratio, omega, dt, mu_bar),
        "2d": lambda s, dt: scaling_evolve_2d(s, n_ratio, g_ratio, omega, dt, mu_bar),
    }[accel_kind]
    dt_max = 2.0 * np.pi / omega / substeps_per_period

    state = ScalingState.initial()
    t_now = float(t_grid[0])
    if t_now != 0.0:
        raise ValueError("scaling trajectories start at t = 0 (L = 1, Ldot = 0)")
    ls, lds, etas, integrals = [state.l], [state.l_dot], [state.eta], [0.0]
    running = 0.0
    for t_next in np.asarray(t_grid)[1:]:
        span = float(t_next) - t_now
        n_sub = max(1, int(np.ceil(span / dt_max)))
        dt = span / n_sub
        for _ in range(n_sub):
            prev_inv = 1.0 / state.l**3
            state = stepper(state, dt)
            running += 0.5 * dt * (prev_inv + 1.0 / state.l**3)
        t_now = float(t_next)
        ls.append(state.l)
        lds.append(state.l_dot)
        etas.append(state.eta)
        integrals.append(running)
    return ScalingTrajectory(
        t=np.asarray(t_grid, dtype=float),
        l=np.array(ls),
        l_dot=np.array(lds),
        eta=np.array(etas),
        int_inv_l3=np.array(integrals),
    )


def displacement_ramp(t, tau: float, dz_total: float):
    """Triangular-velocity trap displacement.

    The velocity rises linearly to its peak dz_total/tau at t = tau and
    falls back to zero at 2 tau; the offset is the integral, reaching
    dz_total at 2 tau and holding.  Returns (offset, velocity); accepts
    scalar or array times.
    """
    t = np.asarray(t, dtype=float)
    v_peak = dz_total / tau
    rising = np.clip(t, 0.0, tau)
    falling = np.clip(t - tau, 0.0, tau)
    velocity = v_peak * (rising / tau) - v_peak * (falling / tau)
    offset = 0.5 * v_peak * rising**2 / tau + v_peak * (
        falling - 0.5 * falling**2 / tau
    )
    if t.ndim == 0:
        return float(offset), float(velocity)
    return offset, velocity
