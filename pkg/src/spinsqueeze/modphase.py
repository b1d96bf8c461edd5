"""Modulus-phase reduction: twist fields from a handful of mean-field runs.

Instead of evolving thousands of Fock states, freeze the wave-function
modulus across the Fock distribution and expand its phase linearly in the
atom numbers.  Central differences of the condensate phases over five
runs at (Na +/- d, Nb) and (Na, Nb +/- d) give the four derivative fields
d theta_eps / d N_eps'; three combinations of them, the twist fields
chi_d, chi_s, chi_0, then carry the entire squeezing dynamics.

Two scorers consume the fields: ``modulus_phase_averages`` for the
overlap-sensitive spin built from the field operators, and
``extracted_averages`` for spins defined against the instantaneous
condensate modes, which stay meaningful for spatially separated clouds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar

from .errors import PhaseUnwrapFailure
from .grids import Grid
from .meanfield import WaveField
from .special import binomial_log_weights, binomial_window
from .spin import MixingState, ModeAverages, moments_from_mode_averages, squeezing_parameter

DENSITY_FLOOR = 1e-6


def default_number_step(n_bar: float) -> int:
    """Finite-difference step over atom number: max(1, sqrt(Nbar)/4)."""
    return max(1, int(round(math.sqrt(n_bar) / 4.0)))


@dataclass(frozen=True)
class PhaseDerivatives:
    """The four one-point fields d theta_eps / d N_eps' on a shared grid."""

    grid: Grid
    dth_a_na: np.ndarray
    dth_a_nb: np.ndarray
    dth_b_na: np.ndarray
    dth_b_nb: np.ndarray
    mask: np.ndarray  # True where the phase is defined

    def difference_combo(self, eps: str) -> np.ndarray:
        """(d/dNa - d/dNb) theta_eps."""
        if eps == "a":
            return self.dth_a_na - self.dth_a_nb
        return self.dth_b_na - self.dth_b_nb

    def sum_combo(self, eps: str) -> np.ndarray:
        """(d/dNa + d/dNb) theta_eps."""
        if eps == "a":
            return self.dth_a_na + self.dth_a_nb
        return self.dth_b_na + self.dth_b_nb


@dataclass(frozen=True)
class ChiFields:
    """Twist fields chi_d, chi_s, chi_0 (radians) on the grid."""

    grid: Grid
    chi_d: np.ndarray
    chi_s: np.ndarray
    chi_0: np.ndarray
    mask: np.ndarray


def chi_fields_from_derivatives(pd: PhaseDerivatives) -> ChiFields:
    diff_a, diff_b = pd.difference_combo("a"), pd.difference_combo("b")
    sum_a, sum_b = pd.sum_combo("a"), pd.sum_combo("b")
    return ChiFields(
        grid=pd.grid,
        chi_d=0.5 * (diff_a - diff_b),
        chi_s=0.5 * (sum_a - sum_b),
        chi_0=0.5 * (diff_a + diff_b),
        mask=pd.mask,
    )


def derivatives_from_chi(chi: ChiFields) -> PhaseDerivatives:
    """Invert the chi combinations in the gauge where the total-phase
    derivative (d/dNa + d/dNb)(theta_a + theta_b) vanishes; that combination
    cancels from every observable."""
    half = 0.5
    return PhaseDerivatives(
        grid=chi.grid,
        dth_a_na=half * (chi.chi_d + chi.chi_s + chi.chi_0),
        dth_a_nb=half * (-chi.chi_d + chi.chi_s - chi.chi_0),
        dth_b_na=half * (-chi.chi_d - chi.chi_s + chi.chi_0),
        dth_b_nb=half * (chi.chi_d - chi.chi_s - chi.chi_0),
        mask=chi.mask,
    )


def _unwrap_phase(amplitude: np.ndarray, grid: Grid, floor: float) -> tuple[np.ndarray, np.ndarray]:
    """Spatially unwrapped phase, growing outward from the density peak."""
    density = np.abs(amplitude) ** 2
    peak = float(density.max())
    if peak <= 0.0:
        raise PhaseUnwrapFailure("field vanishes everywhere")
    valid = density > floor * peak
    if not np.any(valid):
        raise PhaseUnwrapFailure("no grid point above the density floor")
    theta = np.angle(amplitude)
    start = int(np.argmax(density))
    out = theta.copy()
    out[start:] = np.unwrap(theta[start:])
    out[: start + 1] = np.unwrap(theta[: start + 1][::-1])[::-1]
    # hold the boundary value through masked regions to avoid wild jumps
    idx_valid = np.flatnonzero(valid)
    lo, hi = idx_valid[0], idx_valid[-1]
    out[:lo] = out[lo]
    out[hi + 1 :] = out[hi]
    return out, valid


class ChiExtractor:
    """Tracks phase differences across five runs with temporal continuity.

    The run keys are 'a+', 'a-', 'b+', 'b-' for the atom-number offsets.
    Phase differences between partner runs evolve slowly (at twist-field
    rates), so each update re-anchors their 2 pi branch to the previous
    call; the first call anchors to the branch nearest zero.
    """

    def __init__(self, grid: Grid, delta_a: int, delta_b: int,
                 floor: float = DENSITY_FLOOR):
        self.grid = grid
        self.delta_a = delta_a
        self.delta_b = delta_b
        self.floor = floor
        self._previous: dict[str, np.ndarray] = {}

    def _difference(self, key: str, plus: np.ndarray, minus: np.ndarray):
        theta_p, valid_p = _unwrap_phase(plus, self.grid, self.floor)
        theta_m, valid_m = _unwrap_phase(minus, self.grid, self.floor)
        valid = valid_p & valid_m
        diff = theta_p - theta_m
        anchor = diff[np.argmax(np.abs(plus) ** 2)]
        reference = self._previous.get(key)
        target = 0.0 if reference is None else reference[np.argmax(np.abs(plus) ** 2)]
        diff = diff - 2.0 * math.pi * round((anchor - target) / (2.0 * math.pi))
        self._previous[key] = diff
        return diff, valid

    def update(self, runs: dict[str, tuple[np.ndarray, np.ndarray]]) -> PhaseDerivatives:
        """Phase derivatives from the four offset runs at one time stamp.

        ``runs[key] = (phi_a_amplitude, phi_b_amplitude)``.
        """
        d_a = 2.0 * self.delta_a
        d_b = 2.0 * self.delta_b
        dth_a_na, mask_aa = self._difference("a:na", runs["a+"][0], runs["a-"][0])
        dth_b_na, mask_ba = self._difference("b:na", runs["a+"][1], runs["a-"][1])
        dth_a_nb, mask_ab = self._difference("a:nb", runs["b+"][0], runs["b-"][0])
        dth_b_nb, mask_bb = self._difference("b:nb", runs["b+"][1], runs["b-"][1])
        mask = mask_aa & mask_ba & mask_ab & mask_bb
        zero = np.zeros(self.grid.n_points)
        return PhaseDerivatives(
            grid=self.grid,
            dth_a_na=np.where(mask, dth_a_na / d_a, zero),
            dth_a_nb=np.where(mask, dth_a_nb / d_b, zero),
            dth_b_na=np.where(mask, dth_b_na / d_a, zero),
            dth_b_nb=np.where(mask, dth_b_nb / d_b, zero),
            mask=mask,
        )


def chi_fields(runs: dict[str, tuple[np.ndarray, np.ndarray]], grid: Grid,
               delta_a: int, delta_b: int, floor: float = DENSITY_FLOOR) -> ChiFields:
    """One-shot twist fields from the four offset runs (no temporal memory)."""
    extractor = ChiExtractor(grid, delta_a, delta_b, floor)
    return chi_fields_from_derivatives(extractor.update(runs))


# ---------------------------------------------------------------------------
# Scorers
# ---------------------------------------------------------------------------


def _diagonal_averages(n: int, mix: MixingState) -> dict:
    pa, pb = mix.pop_a, mix.pop_b
    return {
        "n_a": n * pa,
        "n_b": n * pb,
        "aaaa": n * (n - 1.0) * pa**2,
        "bbbb": n * (n - 1.0) * pb**2,
        "baab": n * (n - 1.0) * pa * pb,
        "n_ab": n * (n - 1.0) * pa * pb,
    }


def modulus_phase_averages(center_a: WaveField, center_b: WaveField,
                           chi: ChiFields, mix: MixingState, n_total: int,
                           n_bar: float | None = None,
                           derivatives: PhaseDerivatives | None = None,
                           exact_overlaps: bool = False
                           ) -> tuple[ModeAverages, float]:
    """Mode averages of the overlap-sensitive spin in the modulus-phase model.

    ``n_bar`` is the mean total atom number (defaults to n_total; they
    differ only under total-number fluctuations).  With ``exact_overlaps``
    the [integral rho exp(i theta')] factors are evaluated without replacing
    them by exp(i integral rho theta'): the Fock family is reconstructed
    from the phase derivatives and summed exactly, which needs
    ``derivatives``.
    """
    if exact_overlaps:
        pd = derivatives if derivatives is not None else derivatives_from_chi(chi)
        return _modulus_phase_exact(center_a, center_b, pd, mix, n_total)

    grid = center_a.grid
    w = grid.weights
    n = n_total
    n_bar = float(n if n_bar is None else n_bar)
    pa, pb = mix.pop_a, mix.pop_b
    ca, cb = mix.c_a, mix.c_b
    nu = n_bar * (pa - pb)
    chi_d, chi_s, chi_0 = chi.chi_d, chi.chi_s, chi.chi_0

    cross_ba = np.conj(center_b.amplitude) * center_a.amplitude
    rho_a = center_a.density()
    rho_b = center_b.density()

    def log_bracket(phase, power):
        val = pa * np.exp(1j * phase) + pb * np.exp(-1j * phase)
        mag = np.minimum(np.abs(val), 1.0)
        return power * (np.log(np.maximum(mag, 1e-300)) + 1j * np.angle(val))

    common = 1j * (n - n_bar) * chi_s - 1j * nu * chi_d

    ba = n * np.conj(cb) * ca * (
        w @ (cross_ba * np.exp(log_bracket(chi_d, n - 1) + common + 1j * chi_0))
    )
    bbba = n * (n - 1.0) * pb * np.conj(cb) * ca * (
        w @ (cross_ba * np.exp(log_bracket(chi_d, n - 2) + common + 1j * (chi_0 - chi_d)))
    )
    aaab = n * (n - 1.0) * pa * np.conj(ca) * cb * (
        w @ (np.conj(cross_ba) * np.exp(log_bracket(-chi_d, n - 2) - common - 1j * (chi_0 + chi_d)))
    )

    # pair-coherence average couples two points; the binomial expansion of
    # the bracket factorizes it into single integrals per k
    lam = float(w @ (rho_a * (chi_0 + chi_d) + rho_b * (chi_0 - chi_d)))
    ks, c_k = binomial_window(max(n - 2, 0), pa, 1e-14)
    exponent_k = 2.0 * ks - (n - 2.0)
    u_k = np.array([
        w @ (cross_ba * np.exp(1j * (x - nu) * chi_d + 2j * chi_0 + 1j * (n - n_bar) * chi_s))
        for x in exponent_k
    ])
    bbaa = n * (n - 1.0) * np.conj(cb) ** 2 * ca**2 * np.exp(-1j * lam) * (
        c_k @ u_k**2
    )

    diag = _diagonal_averages(n, mix)
    avg = ModeAverages(
        n_a=diag["n_a"], n_b=diag["n_b"], ba=complex(ba),
        aaaa=diag["aaaa"], bbbb=diag["bbbb"],
        baab=float(n * (n - 1.0) * pa * pb * abs(w @ cross_ba) ** 2),
        bbaa=complex(bbaa), bbba=complex(bbba), aaab=complex(aaab),
        n_ab=diag["n_ab"],
    )
    return avg, squeezing_parameter(moments_from_mode_averages(avg))


def _modulus_phase_exact(center_a: WaveField, center_b: WaveField,
                         pd: PhaseDerivatives, mix: MixingState, n_total: int
                         ) -> tuple[ModeAverages, float]:
    """Family reconstruction without the phase-average overlap replacement."""
    from .fockspace import FockFamily, full_model_averages

    grid = center_a.grid
    w = grid.weights
    n = n_total
    ks, _ = binomial_window(n, mix.pop_a, 1e-12)
    n_a = ks.astype(int)
    shift_a = (n_a - mix.pop_a * n)[:, None]
    shift_b = ((n - n_a) - mix.pop_b * n)[:, None]
    phi_a = center_a.amplitude[None, :] * np.exp(
        1j * (shift_a * pd.dth_a_na[None, :] + shift_b * pd.dth_a_nb[None, :])
    )
    phi_b = center_b.amplitude[None, :] * np.exp(
        1j * (shift_a * pd.dth_b_na[None, :] + shift_b * pd.dth_b_nb[None, :])
    )
    # interaction-phase differences follow the same linear expansion
    alpha = float(w @ (center_a.density() * pd.difference_combo("a")))
    beta = float(w @ (center_b.density() * pd.difference_combo("b")))
    a_phase = np.zeros(n_a.size)
    for i in range(1, n_a.size):
        na = float(n_a[i])
        nb = float(n - n_a[i])
        # A(Na-1, Nb+1) - A(Na, Nb) = -hbar[(Na-1) alpha + Nb beta]
        a_phase[i] = a_phase[i - 1] + hbar * ((na - 1.0) * alpha + nb * beta)
    family = FockFamily(
        grid=grid, n_total=n, n_a=n_a, phi_a=phi_a, phi_b=phi_b,
        a_phase=a_phase, times=np.zeros(n_a.size),
    )
    return full_model_averages(family, mix)


def overlap_replacement_defect(center_a: WaveField, center_b: WaveField,
                               chi: ChiFields) -> float:
    """Worst deviation |integral rho e^{i x} - e^{i integral rho x}| over the
    per-shift overlap phases; reports how much the phase-average replacement
    distorts the neighbor overlaps."""
    w = center_a.grid.weights
    worst = 0.0
    for rho, phase in (
        (center_a.density(), chi.chi_0 + chi.chi_d),
        (center_b.density(), chi.chi_0 - chi.chi_d),
    ):
        exact = w @ (rho * np.exp(1j * phase))
        replaced = np.exp(1j * float(w @ (rho * phase)))
        worst = max(worst, abs(exact - replaced))
    return worst


def extracted_averages(center_a: WaveField, center_b: WaveField,
                       pd: PhaseDerivatives, mix: MixingState, n_total: int,
                       n_bar: float | None = None) -> tuple[ModeAverages, float]:
    """Averages of the spin built on the instantaneous condensate modes.

    The two-point twist fields separate into theta_a(r) and theta_b(r')
    derivative terms, so each average factorizes into products of single
    integrals under the binomial expansion of the bracket power.
    """
    grid = center_a.grid
    w = grid.weights
    n = n_total
    n_bar = float(n if n_bar is None else n_bar)
    pa, pb = mix.pop_a, mix.pop_b
    ca, cb = mix.c_a, mix.c_b
    nu = n_bar * (pa - pb)
    rho_a = center_a.density()
    rho_b = center_b.density()
    # single-point pieces of chi_d^ex, chi_s^ex, chi_0^ex
    da = 0.5 * pd.difference_combo("a")
    db = 0.5 * pd.difference_combo("b")
    sa = 0.5 * pd.sum_combo("a")
    sb = 0.5 * pd.sum_combo("b")

    def a_integral(kd, extra):
        """integral rho_a exp(i[(kd) Da + (n - nbar) Sa + extra*Da])."""
        return w @ (rho_a * np.exp(1j * ((kd + extra) * da + (n - n_bar) * sa)))

    def b_integral(kd, extra):
        return w @ (rho_b * np.exp(1j * (-(kd - extra) * db - (n - n_bar) * sb)))

    # <b'a>
    ks, c_k = binomial_window(max(n - 1, 0), pa, 1e-14)
    m_k = 2.0 * ks - (n - 1.0)
    ba_sum = sum(
        c * a_integral(m - nu, 1.0) * b_integral(m - nu, 1.0)
        for c, m in zip(c_k, m_k)
    )
    ba = n * np.conj(cb) * ca * ba_sum

    # <b'b'aa>: two a-points and two b-points share one k
    ks2, c_k2 = binomial_window(max(n - 2, 0), pa, 1e-14)
    m_k2 = 2.0 * ks2 - (n - 2.0)
    lam = 2.0 * float(w @ (rho_a * da + rho_b * db))
    bbaa_sum = sum(
        c * a_integral(m - nu, 2.0) ** 2 * b_integral(m - nu, 2.0) ** 2
        for c, m in zip(c_k2, m_k2)
    )
    bbaa = n * (n - 1.0) * np.conj(cb) ** 2 * ca**2 * np.exp(-1j * lam) * bbaa_sum

    # <b'b'ba>: a-point plain, b-point carries the chi_0 - chi_d piece (2 Db)
    bbba_sum = sum(
        c * a_integral(m - nu, 0.0) * b_integral(m - nu, 2.0)
        for c, m in zip(c_k2, m_k2)
    )
    bbba = n * (n - 1.0) * pb * np.conj(cb) * ca * bbba_sum

    # <a'a'ab>: the bracket weights swap to the b population and the
    # one-point extras conjugate
    ks3, c_k3 = binomial_window(max(n - 2, 0), pb, 1e-14)
    m_k3 = 2.0 * ks3 - (n - 2.0)
    aaab_sum = sum(
        c
        * (w @ (rho_a * np.exp(1j * ((m + nu - 2.0) * da - (n - n_bar) * sa))))
        * (w @ (rho_b * np.exp(1j * (-(m + nu) * db + (n - n_bar) * sb))))
        for c, m in zip(c_k3, m_k3)
    )
    aaab = n * (n - 1.0) * pa * np.conj(ca) * cb * aaab_sum

    diag = _diagonal_averages(n, mix)
    avg = ModeAverages(
        n_a=diag["n_a"], n_b=diag["n_b"], ba=complex(ba),
        aaaa=diag["aaaa"], bbbb=diag["bbbb"], baab=diag["baab"],
        bbaa=complex(bbaa), bbba=complex(bbba), aaab=complex(aaab),
        n_ab=diag["n_ab"],
    )
    return avg, squeezing_parameter(moments_from_mode_averages(avg))
