"""Collective-spin algebra for a pair of bosonic modes.

The nine normally-ordered averages of the mode operators a, b fix every
first and second moment of the collective spin

    S_x = (b'a + a'b)/2,   S_y = (b'a - a'b)/(2i),   S_z = (a'a - b'b)/2.

This module converts those averages into spin moments, finds the Bloch
direction of the mean spin, the minimal variance transverse to it, and the
squeezing parameter xi^2 = <N> * Var_min / |<S>|^2.  A coherent (phase)
state gives xi^2 = 1; smaller values signal metrologically useful
entanglement.

Everything here is a pure function on immutable values; nothing evolves a
state.  The module is safe to call concurrently.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCoherence, ZeroMeanSpin

# |<S>| below ZERO_MEAN_EPS * max(<N>, 1) counts as a vanishing mean spin.
ZERO_MEAN_EPS = 1e-12


@dataclass(frozen=True)
class MixingState:
    """Mode amplitudes (c_a, c_b) of a phase state, |c_a|^2 + |c_b|^2 = 1."""

    c_a: complex
    c_b: complex

    def __post_init__(self):
        norm = abs(self.c_a) ** 2 + abs(self.c_b) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"mixing amplitudes not normalized: |c|^2 = {norm!r}")

    @classmethod
    def from_population(cls, pop_a: float, rel_phase: float = 0.0) -> "MixingState":
        """Build from the a-mode population |c_a|^2 and the relative phase arg(c_a* c_b)."""
        if not 0.0 <= pop_a <= 1.0:
            raise ValueError("population must lie in [0, 1]")
        c_a = math.sqrt(pop_a) * cmath.exp(-0.5j * rel_phase)
        c_b = math.sqrt(1.0 - pop_a) * cmath.exp(0.5j * rel_phase)
        return cls(c_a, c_b)

    @property
    def pop_a(self) -> float:
        return abs(self.c_a) ** 2

    @property
    def pop_b(self) -> float:
        return abs(self.c_b) ** 2


@dataclass(frozen=True)
class ModeAverages:
    """The nine quantum averages that determine all spin moments.

    Naming follows the operator strings: ``ba`` is <b'a>, ``aaaa`` is
    <a'a'aa>, ``bbaa`` is <b'b'aa>, and so on.  ``n_ab`` holds <N_a N_b>
    for models where it differs from the exchange average ``baab``
    (spatially resolved modes with partial overlap); leave it None for a
    strict two-mode system, where the two coincide.
    """

    n_a: float
    n_b: float
    ba: complex
    aaaa: float
    bbbb: float
    baab: float
    bbaa: complex
    bbba: complex
    aaab: complex
    n_ab: float | None = None

    @property
    def number_product(self) -> float:
        """<N_a N_b>, falling back to the exchange average for two-mode systems."""
        return self.baab if self.n_ab is None else self.n_ab

    def validate(self, tol: float = 1e-9) -> None:
        """Check positivity and the operator-level Cauchy-Schwarz bound."""
        scale = max(self.n_a + self.n_b, 1.0)
        if self.n_a < -tol * scale or self.n_b < -tol * scale:
            raise ValueError("negative occupation")
        for name in ("aaaa", "bbbb", "baab"):
            if getattr(self, name) < -tol * scale**2:
                raise ValueError(f"negative pair average {name}")
        bound = self.n_a * self.n_b + min(self.n_a, self.n_b)
        if abs(self.ba) ** 2 > bound * (1.0 + tol) + tol * scale**2:
            raise ValueError("coherence violates Cauchy-Schwarz bound")


@dataclass(frozen=True)
class SpinMoments:
    """First and second moments of the collective spin.

    ``mean`` is (<S_x>, <S_y>, <S_z>), ``var`` the diagonal variances and
    ``cov`` the symmetrized covariances (D_xy, D_zx, D_yz) with
    D_ij = <S_i S_j + S_j S_i> - 2 <S_i><S_j>.
    """

    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray
    n_total: float

    @property
    def mean_length(self) -> float:
        return float(np.linalg.norm(self.mean))

    def covariance_matrix(self) -> np.ndarray:
        d_xy, d_zx, d_yz = self.cov
        return np.array(
            [
                [self.var[0], d_xy / 2.0, d_zx / 2.0],
                [d_xy / 2.0, self.var[1], d_yz / 2.0],
                [d_zx / 2.0, d_yz / 2.0, self.var[2]],
            ]
        )


@dataclass(frozen=True)
class BlochDirection:
    """Polar angle theta in [0, pi] and azimuth phi in (-pi, pi]."""

    theta: float
    phi: float


def moments_from_mode_averages(avg: ModeAverages) -> SpinMoments:
    """Assemble spin moments from the nine mode averages.

    Normal-ordering the quadratic spin operators leaves only the listed
    averages plus their conjugates; the commutator terms produce the
    n_a + n_b contributions below.
    """
    n_a, n_b = avg.n_a, avg.n_b
    ba, bbaa = complex(avg.ba), complex(avg.bbaa)
    bbba, aaab = complex(avg.bbba), complex(avg.aaab)

    s_x = ba.real
    s_y = ba.imag
    s_z = 0.5 * (n_a - n_b)

    xx = 0.25 * (2.0 * bbaa.real + 2.0 * avg.baab + n_a + n_b)
    yy = 0.25 * (-2.0 * bbaa.real + 2.0 * avg.baab + n_a + n_b)
    zz = 0.25 * (avg.aaaa + avg.bbbb - 2.0 * avg.number_product + n_a + n_b)

    var = np.array([xx - s_x**2, yy - s_y**2, zz - s_z**2])

    d_xy = bbaa.imag - 2.0 * s_x * s_y
    d_zx = aaab.real - bbba.real - 2.0 * s_z * s_x
    d_yz = -(aaab.imag + bbba.imag) - 2.0 * s_y * s_z

    return SpinMoments(
        mean=np.array([s_x, s_y, s_z]),
        var=var,
        cov=np.array([d_xy, d_zx, d_yz]),
        n_total=n_a + n_b,
    )


def bloch_angles(m: SpinMoments, eps: float = ZERO_MEAN_EPS) -> BlochDirection:
    """Direction of the mean spin; raises ZeroMeanSpin when it vanishes.

    At the poles the azimuth is undefined and fixed to phi = 0.
    """
    length = m.mean_length
    if length <= eps * max(m.n_total, 1.0):
        raise ZeroMeanSpin(f"|<S>| = {length:.3e} below threshold")
    theta = math.acos(min(1.0, max(-1.0, m.mean[2] / length)))
    transverse = math.hypot(m.mean[0], m.mean[1])
    if transverse <= eps * max(m.n_total, 1.0):
        phi = 0.0
    else:
        phi = math.atan2(m.mean[1], m.mean[0])
    return BlochDirection(theta=theta, phi=phi)


def min_transverse_variance(m: SpinMoments, d: BlochDirection) -> float:
    """Minimal spin variance in the plane orthogonal to the mean spin.

    Rotating the covariance into the frame whose z' axis points along
    (theta, phi) and minimizing over in-plane directions gives
    (Var_x' + Var_y' - sqrt(A^2 + B^2)) / 2 with the combinations below.
    """
    ct, st = math.cos(d.theta), math.sin(d.theta)
    cp, sp = math.cos(d.phi), math.sin(d.phi)
    s2t, s2p = math.sin(2.0 * d.theta), math.sin(2.0 * d.phi)
    c2p = math.cos(2.0 * d.phi)

    vx, vy, vz = m.var
    d_xy, d_zx, d_yz = m.cov

    plane_sum = (
        (ct**2 * cp**2 + sp**2) * vx
        + (ct**2 * sp**2 + cp**2) * vy
        + st**2 * vz
        - 0.5 * st**2 * s2p * d_xy
        - 0.5 * s2t * cp * d_zx
        - 0.5 * s2t * sp * d_yz
    )
    a_comb = (
        (sp**2 - ct**2 * cp**2) * vx
        + (cp**2 - ct**2 * sp**2) * vy
        - st**2 * vz
        - 0.5 * (1.0 + ct**2) * s2p * d_xy
        + 0.5 * s2t * cp * d_zx
        + 0.5 * s2t * sp * d_yz
    )
    b_comb = (
        ct * s2p * (vx - vy)
        - ct * c2p * d_xy
        - st * sp * d_zx
        + st * cp * d_yz
    )
    return 0.5 * (plane_sum - math.hypot(a_comb, b_comb))


def squeezing_parameter(m: SpinMoments, eps: float = ZERO_MEAN_EPS) -> float:
    """xi^2 = <N> Var_min / |<S>|^2 with the instantaneous atom number.

    Under losses <N> decays; using the instantaneous value keeps this
    definition consistent with the symmetric closed form, where the
    prefactor is built from <a'a>.  Pass the initial number explicitly via
    ``squeezing_parameter_fixed_n`` to use the alternative convention.
    """
    d = bloch_angles(m, eps=eps)
    return m.n_total * min_transverse_variance(m, d) / m.mean_length**2


def squeezing_parameter_fixed_n(m: SpinMoments, n_ref: float, eps: float = ZERO_MEAN_EPS) -> float:
    """Squeezing parameter with an explicit (e.g. initial) atom number."""
    d = bloch_angles(m, eps=eps)
    return n_ref * min_transverse_variance(m, d) / m.mean_length**2


def symmetric_squeezing(n_a: float, ba: float, a_tilde: float, b_tilde: float) -> float:
    """Closed-form xi^2 for symmetric condensates.

    In the symmetric case Var(S_z) = <N>/4 and the squeezing reduces to
    xi^2 = (<a'a> / <b'a>^2) (<a'a> + A - sqrt(A^2 + B^2)) with
    A = Re(<b'a'ab> - <b'b'aa>)/2 and B = 2 Im <b'b'ba>; here ``ba`` is
    the magnitude of <b'a>.
    """
    if ba <= 0.0:
        raise DegenerateCoherence("symmetric closed form needs <b'a> > 0")
    return (n_a / ba**2) * (n_a + a_tilde - math.hypot(a_tilde, b_tilde))


def symmetric_combinations(avg: ModeAverages) -> tuple[float, float, float, float]:
    """(n_a, |ba|, A, B) feeding the symmetric closed form."""
    a_tilde = 0.5 * (avg.baab - complex(avg.bbaa).real)
    b_tilde = 2.0 * complex(avg.bbba).imag
    return avg.n_a, abs(avg.ba), a_tilde, b_tilde
