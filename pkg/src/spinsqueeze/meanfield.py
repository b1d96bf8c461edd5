"""Condensate mean-field machinery: ground states, coupled propagation,
accumulated interaction phases and chemical potentials.

The two internal states a, b evolve under coupled Gross-Pitaevskii
equations with per-state mean fields (N_eps - 1) g_ee |phi_eps|^2 +
N_other g_ab |phi_other|^2; the (N - 1) factor is kept exactly since the
Fock-family model depends on it at small atom number.  Propagation uses
symmetric operator splitting: half a potential/mean-field phase, one
kinetic step (spectral or Crank-Nicolson depending on geometry), half a
phase again.  Phase steps leave |phi| untouched and the kinetic step is
unitary, so norms survive to round-off.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar, pi

from .errors import GridMismatch, NoConvergence, NotStationaryWarning, StepTooLarge
from .grids import Geometry, Grid, KineticPropagator
from .units import coupling_from_scattering, quasi2d_coupling, scattering_from_coupling

NORM_STEP_BUDGET = 1e-8


@dataclass(frozen=True)
class TrapConfig:
    """Harmonic trap: isotropic (or in-plane) frequency plus optional axial data.

    ``center_offset`` displaces the trap minimum along the Cartesian axis;
    it must vanish for radial geometries.  ``omega_z`` tags the frozen
    axial frequency of quasi-2D scenarios (used for reduced couplings and
    loss integrals, not by the in-plane propagator).
    """

    mass: float
    omega: float
    omega_z: float | None = None
    center_offset: float = 0.0

    def __post_init__(self):
        if self.mass <= 0.0 or self.omega <= 0.0:
            raise ValueError("mass and omega must be positive")
        if self.omega_z is not None and self.omega_z <= 0.0:
            raise ValueError("omega_z must be positive when present")

    def potential(self, grid: Grid) -> np.ndarray:
        x = grid.points
        if grid.geometry is Geometry.CARTESIAN_1D:
            x = x - self.center_offset
        elif self.center_offset:
            raise ValueError("center offset requires the Cartesian geometry")
        return 0.5 * self.mass * self.omega**2 * x**2


@dataclass(frozen=True)
class CouplingSet:
    """Contact couplings g_aa, g_bb, g_ab (J m^3, or J m^2 for quasi-2D)."""

    g_aa: float
    g_bb: float
    g_ab: float

    @classmethod
    def from_scattering(cls, a_aa, a_bb, a_ab, mass) -> "CouplingSet":
        return cls(
            coupling_from_scattering(a_aa, mass),
            coupling_from_scattering(a_bb, mass),
            coupling_from_scattering(a_ab, mass),
        )

    @classmethod
    def from_scattering_quasi2d(cls, a_aa, a_bb, a_ab, mass, omega_z) -> "CouplingSet":
        return cls(
            quasi2d_coupling(a_aa, mass, omega_z),
            quasi2d_coupling(a_bb, mass, omega_z),
            quasi2d_coupling(a_ab, mass, omega_z),
        )

    def scattering_lengths(self, mass) -> tuple[float, float, float]:
        return tuple(
            scattering_from_coupling(g, mass) for g in (self.g_aa, self.g_bb, self.g_ab)
        )


@dataclass(frozen=True)
class WaveField:
    """Normalized single-particle condensate mode on a grid."""

    grid: Grid
    amplitude: np.ndarray

    def norm_sq(self) -> float:
        return float(self.grid.weights @ np.abs(self.amplitude) ** 2)

    def normalized(self) -> "WaveField":
        return replace(self, amplitude=self.amplitude / np.sqrt(self.norm_sq()))

    def density(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def overlap(self, other: "WaveField") -> complex:
        require_same_grid(self, other)
        return complex(self.grid.weights @ (np.conj(self.amplitude) * other.amplitude))


def require_same_grid(*fields):
    first = fields[0].grid
    for f in fields[1:]:
        if not first.same_as(f.grid):
            raise GridMismatch("fields live on different grids")


def save_wavefield(f: WaveField, path) -> None:
    """Binary checkpoint: header of three little-endian doubles
    (geometry code 1/2/3, n_points, extent in meters) then interleaved
    re/im doubles."""
    code = {Geometry.CARTESIAN_1D: 1.0, Geometry.RADIAL_3D: 2.0, Geometry.RADIAL_2D: 3.0}
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3d", code[f.grid.geometry], float(f.grid.n_points), f.grid.extent))
        data = np.empty(2 * f.grid.n_points)
        data[0::2] = f.amplitude.real
        data[1::2] = f.amplitude.imag
        fh.write(struct.pack(f"<{data.size}d", *data))


def load_wavefield(path) -> WaveField:
    with open(path, "rb") as fh:
        code, n, extent = struct.unpack("<3d", fh.read(24))
        n = int(n)
        raw = np.array(struct.unpack(f"<{2 * n}d", fh.read(16 * n)))
    geometry = {1.0: Geometry.CARTESIAN_1D, 2.0: Geometry.RADIAL_3D, 3.0: Geometry.RADIAL_2D}[code]
    grid = Grid(geometry, n, extent)
    return WaveField(grid, raw[0::2] + 1j * raw[1::2])


class CoupledPropagator:
    """Strang-split real-time stepper for the coupled two-component system.

    Works on batched fields of shape (n_states, n_points): each row is one
    Fock-state pair, carrying its own atom numbers.  Norm drift beyond
    NORM_STEP_BUDGET per step raises StepTooLarge.
    """

    def __init__(self, grid: Grid, trap_a: TrapConfig, trap_b: TrapConfig,
                 couplings: CouplingSet):
        if trap_a.mass != trap_b.mass:
            raise ValueError("both internal states share one atomic mass")
        self.grid = grid
        self.kinetic = KineticPropagator(grid, trap_a.mass)
        self.u_a = trap_a.potential(grid)
        self.u_b = trap_b.potential(grid)
        self.couplings = couplings

    def set_offsets(self, offset_a: float, offset_b: float, trap_a, trap_b):
        """Rebuild trap potentials at displaced centers (separation ramps)."""
        self.u_a = replace(trap_a, center_offset=offset_a).potential(self.grid)
        self.u_b = replace(trap_b, center_offset=offset_b).potential(self.grid)

    def _phase(self, psi_a, psi_b, n_a, n_b, dt_half):
        g = self.couplings
        dens_a = np.abs(psi_a) ** 2
        dens_b = np.abs(psi_b) ** 2
        v_a = self.u_a + (n_a - 1.0) * g.g_aa * dens_a + n_b * g.g_ab * dens_b
        v_b = self.u_b + (n_b - 1.0) * g.g_bb * dens_b + n_a * g.g_ab * dens_a
        psi_a = psi_a * np.exp(-1j * dt_half / hbar * v_a)
        psi_b = psi_b * np.exp(-1j * dt_half / hbar * v_b)
        return psi_a, psi_b

    def step(self, psi_a, psi_b, n_a, n_b, dt, check_norm=True):
        """Advance one dt.  n_a, n_b are scalars or per-row arrays."""
        n_a = np.asarray(n_a, dtype=float)[..., None] if np.ndim(n_a) else n_a
        n_b = np.asarray(n_b, dtype=float)[..., None] if np.ndim(n_b) else n_b
        psi_a, psi_b = self._phase(psi_a, psi_b, n_a, n_b, 0.5 * dt)
        psi_a = self.kinetic.apply(psi_a, dt)
        psi_b = self.kinetic.apply(psi_b, dt)
        psi_a, psi_b = self._phase(psi_a, psi_b, n_a, n_b, 0.5 * dt)
        if check_norm:
            w = self.grid.weights
            for psi in (psi_a, psi_b):
                norms = np.abs(psi) ** 2 @ w
                drift = np.max(np.abs(norms - 1.0))
                if not np.isfinite(drift) or drift > NORM_STEP_BUDGET:
                    raise StepTooLarge(f"norm drift {drift:.2e} in one step; reduce dt")
        return psi_a, psi_b


def propagate_coupled(phi_a: WaveField, phi_b: WaveField, n_a: float, n_b: float,
                      couplings: CouplingSet, traps: tuple[TrapConfig, TrapConfig],
                      dt: float) -> tuple[WaveField, WaveField]:
    """One coupled step for a single pair of fields (non-batched interface)."""
    require_same_grid(phi_a, phi_b)
    prop = CoupledPropagator(phi_a.grid, traps[0], traps[1], couplings)
    psi_a, psi_b = prop.step(phi_a.amplitude, phi_b.amplitude, n_a, n_b, dt)
    return WaveField(phi_a.grid, psi_a), WaveField(phi_b.grid, psi_b)


def interaction_phase_rate(phi_a, phi_b, n_a, n_b, couplings: CouplingSet):
    """Instantaneous dA/dt of the accumulated interaction phase (J units).

    Accepts WaveFields or batched raw amplitudes given a shared grid via
    the first argument's grid attribute.
    """
    require_same_grid(phi_a, phi_b)
    w = phi_a.grid.weights
    dens_a = phi_a.density()
    dens_b = phi_b.density()
    g = couplings
    quartic_a = float(w @ dens_a**2)
    quartic_b = float(w @ dens_b**2)
    cross = float(w @ (dens_a * dens_b))
    return (
        -n_a * (n_a - 1.0) * 0.5 * g.g_aa * quartic_a
        - n_b * (n_b - 1.0) * 0.5 * g.g_bb * quartic_b
        - n_a * n_b * g.g_ab * cross
    )


def accumulate_phase_A(phi_a, phi_b, n_a, n_b, couplings, dt, a_phase):
    """Advance the interaction phase by dt at the current field configuration."""
    return a_phase + dt * interaction_phase_rate(phi_a, phi_b, n_a, n_b, couplings)


def gpe_energy(phi_a: WaveField, phi_b: WaveField, n_a, n_b,
               couplings: CouplingSet, traps) -> float:
    """Total mean-field energy of the pair (J), for conservation checks."""
    require_same_grid(phi_a, phi_b)
    grid = phi_a.grid
    w = grid.weights
    kin = KineticPropagator(grid, traps[0].mass)
    e = 0.0
    for phi, n_self, n_other, trap, g_self in (
        (phi_a, n_a, n_b, traps[0], couplings.g_aa),
        (phi_b, n_b, n_a, traps[1], couplings.g_bb),
    ):
        dens = phi.density()
        e += n_self * float(np.real(w @ kin.kinetic_energy_density(phi.amplitude)))
        e += n_self * float(w @ (trap.potential(grid) * dens))
        e += 0.5 * n_self * (n_self - 1.0) * g_self * float(w @ dens**2)
    e += n_a * n_b * couplings.g_ab * float(
        w @ (phi_a.density() * phi_b.density())
    )
    return e


def _tf_profile(grid: Grid, trap: TrapConfig, g: float, n_atoms: float) -> np.ndarray:
    """Thomas-Fermi starting guess (falls back to a Gaussian when g ~ 0)."""
    u = trap.potential(grid)
    if g * n_atoms <= 0.0:
        width = np.sqrt(hbar / (trap.mass * trap.omega))
        x = grid.points - (trap.center_offset if grid.geometry is Geometry.CARTESIAN_1D else 0.0)
        dens = np.exp(-((x / width) ** 2))
    else:
        # bisect the chemical potential to the atom-number constraint
        mu_lo, mu_hi = 0.0, float(np.max(u)) + g * n_atoms * 10.0 / float(grid.weights.sum())
        for _ in range(200):
            mu = 0.5 * (mu_lo + mu_hi)
            dens = np.clip(mu - u, 0.0, None) / g
            total = float(grid.weights @ dens)
            if total > n_atoms:
                mu_hi = mu
            else:
                mu_lo = mu
        dens = np.clip(mu - u, 0.0, None) / (g * n_atoms)
    norm = float(grid.weights @ dens)
    return np.sqrt(dens / norm).astype(complex)


def coupled_ground_state(
    grid: Grid,
    traps: tuple[TrapConfig, TrapConfig],
    couplings: CouplingSet,
    n_a: float,
    n_b: float,
    tol: float = 1e-12,
    max_iter: int = 200_000,
    dt_factor: float = 0.05,
    start: tuple[WaveField, WaveField] | None = None,
    history: list | None = None,
) -> tuple[WaveField, WaveField]:
    """Imaginary-time relaxation of the coupled pair to its ground state.

    Converges when the relative energy change per step drops below ``tol``;
    raises NoConvergence with the final residual otherwise.  A Thomas-Fermi
    pair (or ``start``) seeds the iteration, so only the boundary layer and
    the soft spin channel remain to relax.
    """
    if start is None:
        g_eff_a = couplings.g_aa if n_b == 0 else 0.5 * (couplings.g_aa + couplings.g_ab)
        g_eff_b = couplings.g_bb if n_a == 0 else 0.5 * (couplings.g_bb + couplings.g_ab)
        psi_a = _tf_profile(grid, traps[0], g_eff_a, max(n_a + n_b, 1.0))
        psi_b = _tf_profile(grid, traps[1], g_eff_b, max(n_a + n_b, 1.0))
    else:
        psi_a = start[0].amplitude.copy()
        psi_b = start[1].amplitude.copy()

    kin = KineticPropagator(grid, traps[0].mass)
    u_a = traps[0].potential(grid)
    u_b = traps[1].potential(grid)
    w = grid.weights
    g = couplings

    mu_scale = max(
        abs(interaction_phase_rate(WaveField(grid, psi_a), WaveField(grid, psi_b),
                                   n_a, n_b, couplings)) / max(n_a + n_b, 1.0),
        hbar * traps[0].omega,
    )
    dt = dt_factor * hbar / mu_scale

    def energy(pa, pb):
        return gpe_energy(WaveField(grid, pa), WaveField(grid, pb), n_a, n_b, couplings, traps)

    def renorm(psi):
        return psi / np.sqrt(np.abs(psi) ** 2 @ w)

    def relax(psi_a, psi_b, dt, budget):
        e_prev = energy(psi_a, psi_b)
        residual = np.inf
        for iteration in range(budget):
            dens_a = np.abs(psi_a) ** 2
            dens_b = np.abs(psi_b) ** 2
            v_a = u_a + (n_a - 1.0) * g.g_aa * dens_a + n_b * g.g_ab * dens_b
            v_b = u_b + (n_b - 1.0) * g.g_bb * dens_b + n_a * g.g_ab * dens_a
            psi_a = psi_a * np.exp(-0.5 * dt / hbar * v_a)
            psi_b = psi_b * np.exp(-0.5 * dt / hbar * v_b)
            psi_a = kin.apply(psi_a, dt, imaginary=True)
            psi_b = kin.apply(psi_b, dt, imaginary=True)
            dens_a = np.abs(psi_a) ** 2
            dens_b = np.abs(psi_b) ** 2
            v_a = u_a + (n_a - 1.0) * g.g_aa * dens_a + n_b * g.g_ab * dens_b
            v_b = u_b + (n_b - 1.0) * g.g_bb * dens_b + n_a * g.g_ab * dens_a
            psi_a = renorm(psi_a * np.exp(-0.5 * dt / hbar * v_a))
            psi_b = renorm(psi_b * np.exp(-0.5 * dt / hbar * v_b))
            if iteration % 10 == 9:
                e_now = energy(psi_a, psi_b)
                if history is not None:
                    history.append(e_now)
                residual = abs(e_now - e_prev) / (10.0 * max(abs(e_now), 1e-300))
                if residual < tol:
                    return psi_a, psi_b, residual
                e_prev = e_now
        return psi_a, psi_b, residual

    psi_a, psi_b, residual = relax(psi_a, psi_b, dt, max_iter)
    if residual >= tol:
        raise NoConvergence(
            f"imaginary time did not reach {tol:g} in {max_iter} steps",
            residual=residual,
            iterations=max_iter,
        )
    # preconditioned residual descent removes the O(dt^2) bias of the
    # split-step fixed point, leaving true discrete stationary states
    psi_a, psi_b = _residual_refine(kin, u_a, u_b, g, n_a, n_b, psi_a, psi_b, w)
    return WaveField(grid, psi_a), WaveField(grid, psi_b)


def _residual_refine(kin, u_a, u_b, g, n_a, n_b, psi_a, psi_b, w,
                     r_tol=1e-11, max_iter=4000):
    """Drive ||(H - mu) psi|| to r_tol*|mu| with spectrally preconditioned steps."""

    def residual(psi, v_eff):
        h_psi = kin.apply_kinetic(psi) + v_eff * psi
        mu = float(np.real(w @ (np.conj(psi) * h_psi)))
        r = h_psi - mu * psi
        return r, mu, math.sqrt(abs(float(np.real(w @ (np.conj(r) * r))))) / abs(mu)

    step = 0.5
    best = np.inf
    since_best = 0
    for _ in range(max_iter):
        dens_a = np.abs(psi_a) ** 2
        dens_b = np.abs(psi_b) ** 2
        v_a = u_a + (n_a - 1.0) * g.g_aa * dens_a + n_b * g.g_ab * dens_b
        v_b = u_b + (n_b - 1.0) * g.g_bb * dens_b + n_a * g.g_ab * dens_a
        r_a, mu_a, res_a = residual(psi_a, v_a)
        r_b, mu_b, res_b = residual(psi_b, v_b)
        worst = max(res_a, res_b)
        if worst < r_tol:
            break
        if worst < 0.8 * best:
            best, since_best = worst, 0
        else:
            since_best += 1
            if since_best > 60:  # limit cycle; damp the step
                step *= 0.5
                since_best = 0
        # shifts must dominate the potential ceiling or edge-localized
        # modes amplify under the preconditioned step
        shift_a = max(abs(mu_a), float(np.max(np.real(v_a)))) + 1e-300
        shift_b = max(abs(mu_b), float(np.max(np.real(v_b)))) + 1e-300
        psi_a = psi_a - step * kin.solve_shifted(r_a, shift_a)
        psi_b = psi_b - step * kin.solve_shifted(r_b, shift_b)
        psi_a = psi_a / np.sqrt(np.abs(psi_a) ** 2 @ w)
        psi_b = psi_b / np.sqrt(np.abs(psi_b) ** 2 @ w)
    return psi_a, psi_b


def ground_state(trap: TrapConfig, g: float, n_atoms: float, grid: Grid,
                 tol: float = 1e-12, max_iter: int = 200_000) -> WaveField:
    """Single-species stationary state by imaginary-time relaxation."""
    couplings = CouplingSet(g_aa=g, g_bb=0.0, g_ab=0.0)
    trap_b = trap
    phi_a, _ = coupled_ground_state(
        grid, (trap, trap_b), couplings, n_atoms, 0.0, tol=tol, max_iter=max_iter
    )
    return phi_a


def chemical_potential(phi: WaveField, partner_density, n_self: float, n_other: float,
                       couplings: CouplingSet, trap: TrapConfig,
                       self_is_a: bool = True, warn_tol: float = 1e-6) -> float:
    """mu = <phi| h + (N_self - 1) g_ss |phi|^2 + N_other g_ab rho_other |phi> in J.

    Warns (NotStationaryWarning) when the local chemical potential varies
    by more than ``warn_tol`` relative over the bulk, which signals that
    the input is not a stationary state.
    """
    grid = phi.grid
    w = grid.weights
    kin = KineticPropagator(grid, trap.mass)
    g_self = couplings.g_aa if self_is_a else couplings.g_bb
    dens = phi.density()
    v_eff = trap.potential(grid) + (n_self - 1.0) * g_self * dens + (
        n_other * couplings.g_ab * np.asarray(partner_density)
    )
    t_dens = kin.kinetic_energy_density(phi.amplitude)
    mu = float(np.real(w @ (t_dens + v_eff * dens)))

    bulk = dens > 1e-3 * dens.max()
    h_phi = np.real(t_dens[bulk] / np.where(dens[bulk] > 0, dens[bulk], 1.0)) + v_eff[bulk]
    weight = (w * dens)[bulk]
    mean = float(weight @ h_phi) / float(weight.sum())
    spread = math.sqrt(float(weight @ (h_phi - mean) ** 2) / float(weight.sum())) / abs(mu)
    if spread > warn_tol:
        warnings.warn(
            f"local chemical potential varies by {spread:.1e} relative; "
            "field is not stationary",
            NotStationaryWarning,
            stacklevel=2,
        )
    return mu
