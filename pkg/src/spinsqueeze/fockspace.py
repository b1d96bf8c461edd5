"""Families of two-mode Fock states with their own condensate wave functions.

A phase state of N atoms expands over Fock states |N_a, N - N_a> whose
pair of wave functions evolves under the coupled mean-field equations
with that state's own atom numbers, each accumulating its interaction
phase A(N_a, N_b; t).  Squeezing then follows from binomially weighted
sums over the family in which neighboring wave-function overlaps appear
raised to atom-number powers.

Only a window of Fock states around the mean occupations is retained;
binomial weight outside the window must stay below 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar

from .errors import DesyncFamily, WindowTooSmall
from .grids import Grid
from .meanfield import CoupledPropagator, CouplingSet, TrapConfig, WaveField
from .special import binomial_log_weights
from .spin import MixingState, ModeAverages, moments_from_mode_averages, squeezing_parameter

DISCARD_BUDGET = 1e-9


@dataclass(frozen=True)
class FockFamily:
    """Retained Fock states: amplitudes stacked row-wise over ascending n_a."""

    grid: Grid
    n_total: int
    n_a: np.ndarray            # integer atom numbers in mode a
    phi_a: np.ndarray          # (n_entries, n_points) complex
    phi_b: np.ndarray
    a_phase: np.ndarray        # accumulated interaction phase per entry, J s
    times: np.ndarray          # per-entry clock, seconds

    @property
    def n_entries(self) -> int:
        return self.n_a.size

    @property
    def n_b(self) -> np.ndarray:
        return self.n_total - self.n_a

    def time(self) -> float:
        t0 = float(self.times[0])
        if np.any(np.abs(self.times - t0) > 1e-9 * max(abs(t0), 1e-30) + 1e-300):
            raise DesyncFamily("family entries differ in time stamp")
        return t0

    def entry(self, n_a: int) -> tuple[WaveField, WaveField, float]:
        idx = int(n_a) - int(self.n_a[0])
        if not 0 <= idx < self.n_entries or self.n_a[idx] != n_a:
            raise KeyError(f"Fock state N_a = {n_a} not retained")
        return (
            WaveField(self.grid, self.phi_a[idx]),
            WaveField(self.grid, self.phi_b[idx]),
            float(self.a_phase[idx]),
        )


def default_window(n_total: int) -> int:
    """Half-width of the retained n_a range, at least 3 sqrt(N) per side."""
    return max(int(math.ceil(3.0 * math.sqrt(n_total))), 8)


def init_fock_family(phi0: WaveField, mix: MixingState, n_total: int,
                     window: int | None = None) -> FockFamily:
    """Family at the mixing pulse: every entry starts from phi0 with A = 0."""
    if window is None:
        window = default_window(n_total)
    center = int(round(mix.pop_a * n_total))
    lo = max(0, center - window)
    hi = min(n_total, center + window)
    n_a = np.arange(lo, hi + 1)
    inside = np.exp(binomial_log_weights(n_total, mix.pop_a, n_a)).sum()
    discarded = max(0.0, 1.0 - inside)
    if discarded > DISCARD_BUDGET:
        raise WindowTooSmall(
            f"window {window} leaves binomial mass {discarded:.1e} outside "
            f"(budget {DISCARD_BUDGET:g})"
        )
    return FockFamily(
        grid=phi0.grid,
        n_total=n_total,
        n_a=n_a,
        phi_a=np.tile(phi0.amplitude, (n_a.size, 1)),
        phi_b=np.tile(phi0.amplitude, (n_a.size, 1)),
        a_phase=np.zeros(n_a.size),
        times=np.zeros(n_a.size),
    )


def _phase_rates(family: FockFamily, couplings: CouplingSet) -> np.ndarray:
    """dA/dt per entry (vectorized version of the single-pair integrand)."""
    w = family.grid.weights
    dens_a = np.abs(family.phi_a) ** 2
    dens_b = np.abs(family.phi_b) ** 2
    n_a = family.n_a.astype(float)
    n_b = family.n_b.astype(float)
    g = couplings
    return (
        -0.5 * n_a * (n_a - 1.0) * g.g_aa * (dens_a**2 @ w)
        - 0.5 * n_b * (n_b - 1.0) * g.g_bb * (dens_b**2 @ w)
        - n_a * n_b * g.g_ab * ((dens_a * dens_b) @ w)
    )


def evolve_family(family: FockFamily, couplings: CouplingSet,
                  traps: tuple[TrapConfig, TrapConfig], dt: float,
                  n_steps: int = 1,
                  propagator: CoupledPropagator | None = None) -> FockFamily:
    """Advance every Fock state by n_steps of dt.

    The interaction phases integrate dA/dt with the trapezoid rule across
    each step, matching the second-order splitting of the propagator.
    """
    family.time()
    prop = propagator or CoupledPropagator(family.grid, traps[0], traps[1], couplings)
    work = family
    rate = _phase_rates(work, couplings)
    for _ in range(n_steps):
        phi_a, phi_b = prop.step(work.phi_a, work.phi_b,
                                 work.n_a.astype(float), work.n_b.astype(float), dt)
        work = replace(work, phi_a=phi_a, phi_b=phi_b)
        rate_next = _phase_rates(work, couplings)
        work = replace(work, a_phase=work.a_phase + 0.5 * dt * (rate + rate_next))
        rate = rate_next
    return replace(work, times=family.times + n_steps * dt)


def _clamped_log(z: np.ndarray) -> np.ndarray:
    """Complex log with |z| clamped at 1: overlap moduli cannot exceed unity."""
    z = np.asarray(z, dtype=complex)
    mag = np.minimum(np.abs(z), 1.0)
    with np.errstate(divide="ignore"):
        return np.where(mag > 0, np.log(np.maximum(mag, 1e-300)), -745.0) + 1j * np.angle(z)


def full_model_averages(family: FockFamily, mix: MixingState
                        ) -> tuple[ModeAverages, float]:
    """Spatially integrated mode averages and xi^2 of the full family model.

    Cross-mode averages combine per-entry integrals with neighbor-state
    overlaps raised to atom-number powers and the interaction-phase
    differences exp(i dA / hbar); weights assemble in log space.
    """
    family.time()
    w = family.grid.weights
    n = family.n_total
    n_a = family.n_a.astype(float)
    n_b = family.n_b.astype(float)
    pa, pb = mix.pop_a, mix.pop_b
    log_w = binomial_log_weights(n, pa, family.n_a)
    weights = np.exp(log_w)

    def cross(bra, ket, shift):
        """integral conj(bra[i + shift]) ket[i] dV, for entries where both exist."""
        if shift < 0:
            return (np.conj(bra[:shift]) * ket[-shift:]) @ w
        if shift > 0:
            return (np.conj(bra[shift:]) * ket[:-shift]) @ w
        return (np.conj(bra) * ket) @ w

    # diagonal moments carry no wave-function factors
    avg = {
        "n_a": float(weights @ n_a),
        "n_b": float(weights @ n_b),
        "aaaa": float(weights @ (n_a * (n_a - 1.0))),
        "bbbb": float(weights @ (n_b * (n_b - 1.0))),
        "n_ab": float(weights @ (n_a * n_b)),
        "baab": float(weights @ (n_a * n_b * np.abs(cross(family.phi_b, family.phi_a, 0)) ** 2)),
    }

    def assemble(shift, log_count, cross_factor, pow_a, pow_b):
        """Sum over kets i (bra at i + shift) of the log-space product."""
        if shift < 0:
            ket_idx = np.arange(-shift, family.n_entries)
        else:
            ket_idx = np.arange(0, family.n_entries - shift)
        bra_idx = ket_idx + shift
        ov_a = cross(family.phi_a, family.phi_a, shift)
        ov_b = cross(family.phi_b, family.phi_b, shift)
        log_terms = (
            log_w[ket_idx]
            + log_count[ket_idx]
            + pow_a[ket_idx] * _clamped_log(ov_a)
            + pow_b[ket_idx] * _clamped_log(ov_b)
            + 1j * (family.a_phase[bra_idx] - family.a_phase[ket_idx]) / hbar
        )
        return np.sum(cross_factor * np.exp(log_terms))

    with np.errstate(divide="ignore"):
        log_na = np.where(n_a >= 1.0, np.log(np.maximum(n_a, 1e-300)), -np.inf)
        log_na2 = np.where(n_a >= 2.0, np.log(np.maximum(n_a * (n_a - 1.0), 1e-300)), -np.inf)
        log_nanb = np.where(
            (n_a >= 1.0) & (n_b >= 1.0), np.log(np.maximum(n_a * n_b, 1e-300)), -np.inf
        )

    # bra indices sit one (or two) Fock states below in n_a for b'...a strings
    ba = np.conj(mix.c_b) * mix.c_a * assemble(
        -1, log_na - math.log(max(pa, 1e-300)),
        cross(family.phi_b, family.phi_a, -1),
        n_a - 1.0, n_b,
    )
    bbaa = np.conj(mix.c_b) ** 2 * mix.c_a**2 * assemble(
        -2, log_na2 - 2.0 * math.log(max(pa, 1e-300)),
        cross(family.phi_b, family.phi_a, -2) ** 2,
        n_a - 2.0, n_b,
    )
    bbba = np.conj(mix.c_b) * mix.c_a * assemble(
        -1, log_nanb - math.log(max(pa, 1e-300)),
        cross(family.phi_b, family.phi_b, -1) * cross(family.phi_b, family.phi_a, -1),
        n_a - 1.0, n_b - 1.0,
    )
    aaab = np.conj(mix.c_a) * mix.c_b * assemble(
        +1, log_nanb - math.log(max(pb, 1e-300)),
        cross(family.phi_a, family.phi_a, 1) * cross(family.phi_a, family.phi_b, 1),
        n_a - 1.0, n_b - 1.0,
    )

    averages = ModeAverages(
        n_a=avg["n_a"], n_b=avg["n_b"], ba=complex(ba),
        aaaa=avg["aaaa"], bbbb=avg["bbbb"], baab=avg["baab"],
        bbaa=complex(bbaa), bbba=complex(bbba), aaab=complex(aaab),
        n_ab=avg["n_ab"],
    )
    xi2 = squeezing_parameter(moments_from_mode_averages(averages))
    return averages, xi2
