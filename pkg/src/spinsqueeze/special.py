"""Small numerical helpers: guarded exponential quotients and binomial weights."""

import numpy as np
from scipy.special import gammaln

# Below this magnitude the exponential quotients switch to their Taylor series;
# direct evaluation would lose ~|eps/u| relative accuracy to cancellation.
_SERIES_CUTOFF = 1e-6


def phi1(u):
    """(1 - exp(-u))/u for complex u, finite and accurate as u -> 0."""
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, u)
    direct = (1.0 - np.exp(-safe)) / safe
    series = 1.0 - u / 2.0 + u * u / 6.0
    return np.where(small, series, direct)


def decay_ratio(u):
    """(1 - e^{-iu})/(iu) for real or complex u (three-term series near zero)."""
    return phi1(1j * np.asarray(u))


def growth_ratio(u):
    """(e^{iu} - 1)/(iu), the conjugate-phase counterpart of decay_ratio."""
    return phi1(-1j * np.asarray(u))


def log_binomial(n, k):
    """log of C(n, k) for nonnegative integer arrays."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def binomial_log_weights(n, p_a, k):
    """log of C(n,k) p_a^k (1-p_a)^(n-k), safe at p_a in {0, 1}."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        term_a = np.where(k > 0, k * np.log(p_a), 0.0)
        term_b = np.where(n - k > 0, (n - k) * np.log1p(-p_a), 0.0)
    return log_binomial(n, k) + term_a + term_b


def binomial_window(n, p_a, mass_tol=1e-14):
    """Index range [k_lo, k_hi] retaining all binomial weight above mass_tol.

    Returns (k, weights) with the weights normalized to the full distribution
    (their sum falls short of 1 by at most ~mass_tol).
    """
    if n == 0:
        return np.array([0]), np.array([1.0])
    mean = n * p_a
    sigma = max(np.sqrt(n * p_a * (1.0 - p_a)), 1.0)
    half = int(np.ceil(sigma * np.sqrt(2.0 * max(-np.log(mass_tol), 1.0)))) + 2
    k_lo = max(0, int(np.floor(mean)) - half)
    k_hi = min(n, int(np.ceil(mean)) + half)
    k = np.arange(k_lo, k_hi + 1)
    w = np.exp(binomial_log_weights(n, p_a, k))
    return k, w
