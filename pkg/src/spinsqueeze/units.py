"""Conversions between experimentalist inputs and the SI values used internally.

Scenario files quote frequencies in Hz, scattering lengths in Bohr radii,
masses in atomic mass units and rate constants in SI.  Everything downstream
works in plain SI (rad/s, m, kg, J).  All conversions live here and round-trip.
"""

import numpy as np
from scipy.constants import atomic_mass, hbar, physical_constants, pi

BOHR_RADIUS = physical_constants["Bohr radius"][0]
HBAR = hbar
ATOMIC_MASS = atomic_mass


def omega_from_hz(f_hz):
    return 2.0 * pi * f_hz


def hz_from_omega(omega):
    return omega / (2.0 * pi)


def meters_from_bohr(a_bohr):
    return a_bohr * BOHR_RADIUS


def bohr_from_meters(a_m):
    return a_m / BOHR_RADIUS


def kg_from_amu(m_amu):
    return m_amu * ATOMIC_MASS


def amu_from_kg(m_kg):
    return m_kg / ATOMIC_MASS


def coupling_from_scattering(a_m, mass_kg):
    """Contact coupling g = 4*pi*hbar^2*a/M in J m^3."""
    return 4.0 * pi * hbar**2 * a_m / mass_kg


def scattering_from_coupling(g, mass_kg):
    return g * mass_kg / (4.0 * pi * hbar**2)


def quasi2d_coupling(a_m, mass_kg, omega_z):
    """Planar coupling in J m^2 for a cloud frozen in the axial Gaussian ground state."""
    return coupling_from_scattering(a_m, mass_kg) * np.sqrt(
        mass_kg * omega_z / (2.0 * pi * hbar)
    )


def harmonic_length(mass_kg, omega):
    return np.sqrt(hbar / (mass_kg * omega))
