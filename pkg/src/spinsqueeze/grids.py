"""Spatial grids, quadrature weights and kinetic-energy propagators.

Three reduced geometries cover the scenarios of interest: a 1D Cartesian
line, the radial coordinate of an isotropic 3D trap (solved on the reduced
field u = r*phi with a sine-spectral Laplacian), and the in-plane radial
coordinate of a quasi-2D disc trap (Crank-Nicolson on the conservative
flux form of the cylindrical Laplacian, which keeps the step exactly
unitary under the r-weighted inner product).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.constants import hbar, pi
from scipy.fft import dst, fft, idst, ifft
from scipy.linalg import solve_banded


class Geometry(str, Enum):
    CARTESIAN_1D = "cartesian1d"
    RADIAL_3D = "radial3d"
    RADIAL_2D = "radial2d"


@dataclass(frozen=True)
class Grid:
    """Uniform grid with volume-element quadrature weights.

    ``extent`` is the half-width of the Cartesian box or the outer radius
    of a radial domain, in meters.  ``n_points`` must be a power of two of
    at least 64 (spectral kinetic steps).
    """

    geometry: Geometry
    n_points: int
    extent: float
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_points
        if n < 64 or n & (n - 1):
            raise ValueError("n_points must be a power of two, at least 64")
        if self.extent <= 0.0:
            raise ValueError("extent must be positive")
        geom = Geometry(self.geometry)
        object.__setattr__(self, "geometry", geom)
        if geom is Geometry.CARTESIAN_1D:
            dx = 2.0 * self.extent / n
            pts = -self.extent + dx * np.arange(n)
            w = np.full(n, dx)
        elif geom is Geometry.RADIAL_3D:
            dr = self.extent / (n + 1)
            pts = dr * np.arange(1, n + 1)
            w = 4.0 * pi * pts**2 * dr
        else:
            dr = self.extent / n
            pts = dr * (np.arange(n) + 0.5)
            w = 2.0 * pi * pts * dr
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    def same_as(self, other: "Grid") -> bool:
        return (
            self.geometry == other.geometry
            and self.n_points == other.n_points
            and abs(self.extent - other.extent) <= 1e-12 * self.extent
        )

    def integrate(self, values: np.ndarray) -> complex | float:
        return values @ self.weights if values.ndim == 1 else values @ self.weights


class KineticPropagator:
    """Applies exp(-i T dt / hbar) (or the diffusive imaginary-time kernel).

    Instances cache the per-step factors; they are cheap to rebuild when dt
    changes.  Fields are accepted batched with shape (..., n_points).
    """

    def __init__(self, grid: Grid, mass: float):
        self.grid = grid
        self.mass = mass
        n, length = grid.n_points, grid.extent

        if grid.geometry is Geometry.CARTESIAN_1D:
            k = 2.0 * pi * np.fft.fftfreq(n, d=grid.spacing)
            self._energies = hbar**2 * k**2 / (2.0 * mass)
        elif grid.geometry is Geometry.RADIAL_3D:
            k = pi * np.arange(1, n + 1) / length
            self._energies = hbar**2 * k**2 / (2.0 * mass)
        else:
            dr = grid.spacing
            r_face = dr * np.arange(1, n)  # shared faces between cells
            main = np.zeros(n)
            main[:-1] -= r_face
            main[1:] -= r_face
            coeff = hbar**2 / (2.0 * mass * dr**2)
            # outer Dirichlet face at R contributes only to the last diagonal entry
            main[-1] -= n * dr
            self._lap_main = coeff * main / self.grid.points
            self._lap_off = coeff * r_face / np.sqrt(
                self.grid.points[:-1] * self.grid.points[1:]
            )
            # symmetrized via similarity transform s = sqrt(r); see apply()
            self._sqrt_r = np.sqrt(self.grid.points)

    def apply(self, psi: np.ndarray, dt: float, imaginary: bool = False) -> np.ndarray:
        """One kinetic step of size dt on a field batch."""
        factor = -dt / hbar if imaginary else -1j * dt / hbar
        if self.grid.geometry is Geometry.CARTESIAN_1D:
            return ifft(np.exp(factor * self._energies) * fft(psi, axis=-1), axis=-1)
        if self.grid.geometry is Geometry.RADIAL_3D:
            u = psi * self.grid.points
            u = idst(np.exp(factor * self._energies) * dst(u, type=1, axis=-1, norm="ortho"),
                     type=1, axis=-1, norm="ortho")
            return u / self.grid.points
        return self._crank_nicolson(psi, dt, imaginary)

    def _crank_nicolson(self, psi, dt, imaginary):
        # similarity-transformed (Hermitian) cylindrical kinetic operator:
        # Tsym = D^{1/2} T D^{-1/2} with D = diag(r); unitary CN step on v = sqrt(r) psi.
        # Tsym diagonal is -self._lap_main, off-diagonal -self._lap_off.
        n = self.grid.n_points
        beta = (0.5 * dt / hbar) if imaginary else (0.5j * dt / hbar)
        v = np.atleast_2d(psi) * self._sqrt_r
        ab_u = np.zeros((3, n), dtype=complex)
        ab_u[0, 1:] = -beta * self._lap_off
        ab_u[1] = 1.0 - beta * self._lap_main
        ab_u[2, :-1] = -beta * self._lap_off
        rhs = (1.0 + beta * self._lap_main)[None, :] * v
        rhs[:, :-1] += beta * self._lap_off * v[:, 1:]
        rhs[:, 1:] += beta * self._lap_off * v[:, :-1]
        out = solve_banded((1, 1), ab_u, rhs.T).T
        out /= self._sqrt_r
        return out.reshape(np.shape(psi))

    def dense_kinetic(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense Hermitian kinetic matrix in the geometry's flat-metric basis.

        Returns (K, carrier): the eigenproblem for K + diag(V) runs on the
        carrier field (psi, r*psi or sqrt(r)*psi) whose plain l2 norm
        matches the physical quadrature up to a constant.  Cached.
        """
        if getattr(self, "_dense_cache", None) is not None:
            return self._dense_cache
        n = self.grid.n_points
        if self.grid.geometry is Geometry.CARTESIAN_1D:
            k_mat = np.real(ifft(self._energies[:, None] * fft(np.eye(n), axis=0), axis=0))
            carrier = np.ones(n)
        elif self.grid.geometry is Geometry.RADIAL_3D:
            basis = dst(np.eye(n), type=1, axis=0, norm="ortho")
            k_mat = basis.T @ (self._energies[:, None] * basis)
            carrier = self.grid.points
        else:
            k_mat = np.zeros((n, n))
            k_mat[np.arange(n), np.arange(n)] = -self._lap_main
            k_mat[np.arange(n - 1), np.arange(1, n)] = -self._lap_off
            k_mat[np.arange(1, n), np.arange(n - 1)] = -self._lap_off
            carrier = self._sqrt_r
        self._dense_cache = (k_mat, carrier)
        return self._dense_cache

    def apply_kinetic(self, psi: np.ndarray) -> np.ndarray:
        """T psi with the same discrete operator the propagator exponentiates."""
        if self.grid.geometry is Geometry.CARTESIAN_1D:
            return ifft(self._energies * fft(psi, axis=-1), axis=-1)
        if self.grid.geometry is Geometry.RADIAL_3D:
            u = psi * self.grid.points
            t_u = idst(self._energies * dst(u, type=1, axis=-1, norm="ortho"),
                       type=1, axis=-1, norm="ortho")
            return t_u / self.grid.points
        v = np.atleast_2d(psi) * self._sqrt_r
        t_v = np.empty_like(v)
        t_v[:] = -self._lap_main * v
        t_v[:, :-1] -= self._lap_off * v[:, 1:]
        t_v[:, 1:] -= self._lap_off * v[:, :-1]
        return (t_v / self._sqrt_r).reshape(np.shape(psi))

    def solve_shifted(self, rhs: np.ndarray, shift: float) -> np.ndarray:
        """(T + shift)^{-1} rhs; the spectral preconditioner for relaxation."""
        if self.grid.geometry is Geometry.CARTESIAN_1D:
            return ifft(fft(rhs, axis=-1) / (self._energies + shift), axis=-1)
        if self.grid.geometry is Geometry.RADIAL_3D:
            u = rhs * self.grid.points
            u = idst(dst(u, type=1, axis=-1, norm="ortho") / (self._energies + shift),
                     type=1, axis=-1, norm="ortho")
            return u / self.grid.points
        n = self.grid.n_points
        ab_u = np.zeros((3, n), dtype=complex)
        ab_u[0, 1:] = -self._lap_off
        ab_u[1] = -self._lap_main + shift
        ab_u[2, :-1] = -self._lap_off
        v = np.atleast_2d(rhs) * self._sqrt_r
        out = solve_banded((1, 1), ab_u, v.T).T / self._sqrt_r
        return out.reshape(np.shape(rhs))

    def kinetic_energy_density(self, psi: np.ndarray) -> np.ndarray:
        """Pointwise psi* T psi / volume weight, for energy integrals."""
        return np.conj(psi) * self.apply_kinetic(psi)
