"""Quantum-trajectory simulation of the lossy two-mode model.

Between jumps the state evolves under the diagonal twisting Hamiltonian
plus a non-Hermitian decay, both diagonal in the pair basis |n_a, n - n_a>,
so the no-jump propagation is exact to round-off.  Jump times come from
the waiting-time construction: the squared norm decays monotonically and a
jump fires when it crosses a uniform threshold, located by bisection.
Each jump applies a ladder-operator monomial and renormalizes.

Two generator flavors are supported: "exact" uses the falling-factorial
decay n(n-1)...(n-m+1) of the true m-body channels, while "constant"
replaces all decay exponents and channel weights by their values at the
mean atom numbers, which is the regime where jumps map phase states to
phase states and the analytic resummation applies.

Trajectories are independent: they carry counter-based random streams
keyed by (seed, trajectory index), so ensembles are reproducible and
order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptySystem, InsufficientStatistics
from .spin import (
    MixingState,
    ModeAverages,
    moments_from_mode_averages,
    squeezing_parameter,
)
from .twomode import LossRates, TwoModeParams

CHANNELS = (
    ("a", 1), ("a", 2), ("a", 3),
    ("b", 1), ("b", 2), ("b", 3),
    ("ab", 2),
)


@dataclass
class TrajectoryState:
    """Amplitudes over n_a = 0..n_current at fixed current atom number."""

    coeffs: np.ndarray
    n_current: int
    t: float
    norm_sq: float = 1.0

    @classmethod
    def phase_state(cls, n_total: int, mix: MixingState) -> "TrajectoryState":
        from .special import binomial_log_weights

        n_a = np.arange(n_total + 1)
        log_w = binomial_log_weights(n_total, mix.pop_a, n_a)
        with np.errstate(divide="ignore", invalid="ignore"):
            phase = np.where(n_a > 0, n_a * np.angle(complex(mix.c_a)), 0.0) + np.where(
                n_total - n_a > 0, (n_total - n_a) * np.angle(complex(mix.c_b)), 0.0
            )
        return cls(coeffs=np.exp(0.5 * log_w + 1j * phase), n_current=n_total, t=0.0)


@dataclass(frozen=True)
class JumpEvent:
    channel: str
    order: int
    time: float


def _falling(n: np.ndarray, m: int) -> np.ndarray:
    out = np.ones_like(n, dtype=float)
    for k in range(m):
        out *= np.clip(n - k, 0.0, None)
    return out


class TwoModeJumpModel:
    """Generators and jump algebra shared by all trajectories of a run."""

    def __init__(self, params: TwoModeParams, rates: LossRates, mode: str = "exact"):
        if mode not in ("exact", "constant"):
            raise ValueError("mode is 'exact' or 'constant'")
        self.params = params
        self.rates = rates
        self.mode = mode
        self.n_total = params.n_total
        self._diag_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._factor_cache: dict[int, np.ndarray] = {}

    def diagonals(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached (phase frequencies, decay rates) at n atoms."""
        cached = self._diag_cache.get(n)
        if cached is None:
            cached = (self.phase_frequencies(n), self.decay_rates(n))
            self._diag_cache[n] = cached
        return cached

    def channel_factors(self, n: int) -> np.ndarray:
        """Cached (n_channels, n+1) matrix of <J'J> diagonal factors."""
        cached = self._factor_cache.get(n)
        if cached is None:
            n_a = np.arange(n + 1, dtype=float)
            n_b = n - n_a
            rows = [
                _falling(n_a, 1), _falling(n_a, 2), _falling(n_a, 3),
                _falling(n_b, 1), _falling(n_b, 2), _falling(n_b, 3),
                n_a * n_b,
            ]
            cached = np.array(rows)
            self._factor_cache[n] = cached
        return cached

    def observable_amps(self, n: int) -> dict:
        """Cached ladder amplitudes for the nine-average extraction at n atoms."""
        cached = getattr(self, "_obs_cache", None)
        if cached is None:
            cached = {}
            self._obs_cache = cached
        arrs = cached.get(n)
        if arrs is None:
            n_a = np.arange(n + 1, dtype=float)
            n_b = n - n_a
            arrs = {
                "n_a": n_a,
                "n_b": n_b,
                "naa": n_a * (n_a - 1.0),
                "nbb": n_b * (n_b - 1.0),
                "nab": n_a * n_b,
                "ba": np.sqrt(n_a[1:] * (n_b[1:] + 1.0)) if n >= 1 else np.zeros(0),
                "bbaa": (
                    np.sqrt(n_a[2:] * (n_a[2:] - 1.0) * (n_b[2:] + 1.0) * (n_b[2:] + 2.0))
                    if n >= 2 else np.zeros(0)
                ),
                "bbba_w": n_b[1:] if n >= 1 else np.zeros(0),
                "aaab": (
                    n_a[:-1] * np.sqrt((n_a[:-1] + 1.0) * n_b[:-1]) if n >= 1 else np.zeros(0)
                ),
            }
            cached[n] = arrs
        return arrs

    def phase_frequencies(self, n: int) -> np.ndarray:
        """omega(n_a) of the diagonal twisting evolution at n atoms total."""
        p = self.params
        n_a = np.arange(n + 1)
        m = 2.0 * n_a - n
        v_n = p.v + 0.5 * p.chi_tilde * (n - p.n_total)
        return v_n * m + 0.25 * p.chi * m * m

    def decay_rates(self, n: int) -> np.ndarray:
        """Total loss rate Gamma(n_a) entering the norm decay at n atoms."""
        r = self.rates
        n_a = np.arange(n + 1, dtype=float)
        n_b = n - n_a
        if self.mode == "constant":
            return np.full(n + 1, r.lam)
        total = np.zeros(n + 1)
        for m in (1, 2, 3):
            total += r.gamma_a[m - 1] * _falling(n_a, m)
            total += r.gamma_b[m - 1] * _falling(n_b, m)
        total += r.gamma_ab * n_a * n_b
        return total

    def channel_weights(self, state: TrajectoryState) -> np.ndarray:
        """<J'J> per channel on the current state (or constant-rate analogue)."""
        r = self.rates
        gammas = np.array([
            r.gamma_a[0], r.gamma_a[1], r.gamma_a[2],
            r.gamma_b[0], r.gamma_b[1], r.gamma_b[2],
            r.gamma_ab,
        ])
        if self.mode == "constant":
            na, nb = self.params.n_a_bar, self.params.n_b_bar
            means = np.array([na, na**2, na**3, nb, nb**2, nb**3, na * nb])
            return gammas * means
        prob = np.abs(state.coeffs) ** 2
        prob = prob / prob.sum()
        return gammas * (self.channel_factors(state.n_current) @ prob)

    def apply_jump(self, state: TrajectoryState, channel: str, order: int
                   ) -> TrajectoryState:
        """Ladder-monomial action, reindexing to the reduced atom number."""
        n = state.n_current
        c = state.coeffs
        n_a = np.arange(n + 1, dtype=float)
        n_b = n - n_a
        if channel == "a":
            lost_a, lost = order, order
            amp = np.sqrt(_falling(n_a, order))
        elif channel == "b":
            lost_a, lost = 0, order
            amp = np.sqrt(_falling(n_b, order))
        else:
            lost_a, lost = 1, 2
            amp = np.sqrt(n_a * n_b)
        if n - lost < 0:
            raise EmptySystem("no channel can act on the remaining atoms")
        new = (amp * c)[lost_a : lost_a + (n - lost) + 1]
        norm = np.linalg.norm(new)
        if norm == 0.0:
            raise EmptySystem(f"jump {channel}^{order} annihilates the state")
        return TrajectoryState(
            coeffs=new / norm, n_current=n - lost, t=state.t, norm_sq=1.0
        )


def evolve_nonhermitian(state: TrajectoryState, params: TwoModeParams,
                        rates: LossRates, dt: float, mode: str = "exact"
                        ) -> TrajectoryState:
    """One exact diagonal step of phase evolution and norm decay."""
    model = TwoModeJumpModel(params, rates, mode)
    w = model.phase_frequencies(state.n_current)
    g = model.decay_rates(state.n_current)
    coeffs = state.coeffs * np.exp((-1j * w - 0.5 * g) * dt)
    norm_sq = float(np.vdot(coeffs, coeffs).real)
    return TrajectoryState(coeffs=coeffs, n_current=state.n_current,
                           t=state.t + dt, norm_sq=state.norm_sq * 0.0 + norm_sq)


def sample_jump(state: TrajectoryState, rng: np.random.Generator,
                model: TwoModeJumpModel) -> tuple[TrajectoryState, JumpEvent]:
    """Draw a channel by <J'J> weight and apply it at the current time."""
    weights = model.channel_weights(state)
    total = weights.sum()
    if total <= 0.0:
        raise EmptySystem("all jump channels have zero weight")
    pick = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(weights), pick))
    species, order = CHANNELS[min(idx, len(CHANNELS) - 1)]
    return model.apply_jump(state, species, order), JumpEvent(species, order, state.t)


def mode_averages_from_coeffs(coeffs: np.ndarray, n: int,
                              model: TwoModeJumpModel | None = None) -> dict:
    """The nine averages on a normalized pair-basis state."""
    c = coeffs
    if model is None:
        model = TwoModeJumpModel.__new__(TwoModeJumpModel)  # bare cache holder
    amps = model.observable_amps(n)
    prob = np.abs(c) ** 2
    step1 = np.conj(c[:-1]) * c[1:] if n >= 1 else np.zeros(0)
    ba = np.sum(step1 * amps["ba"]) if n >= 1 else 0.0
    bbaa = np.sum(np.conj(c[:-2]) * c[2:] * amps["bbaa"]) if n >= 2 else 0.0
    bbba = np.sum(step1 * amps["bbba_w"] * amps["ba"]) if n >= 1 else 0.0
    aaab = np.sum(np.conj(step1) * amps["aaab"]) if n >= 1 else 0.0
    return {
        "n_a": float(prob @ amps["n_a"]),
        "n_b": float(prob @ amps["n_b"]),
        "ba": complex(ba),
        "aaaa": float(prob @ amps["naa"]),
        "bbbb": float(prob @ amps["nbb"]),
        "baab": float(prob @ amps["nab"]),
        "bbaa": complex(bbaa),
        "bbba": complex(bbba),
        "aaab": complex(aaab),
    }


FIELDS = ("n_a", "n_b", "ba", "aaaa", "bbbb", "baab", "bbaa", "bbba", "aaab")


def run_trajectory(params: TwoModeParams, rates: LossRates, t_grid,
                   rng: np.random.Generator, mode: str = "exact",
                   bisect_tol: float = 1e-3,
                   collect_events: bool = False,
                   model: TwoModeJumpModel | None = None):
    """One trajectory, returning per-time averages (and optionally events).

    ``bisect_tol`` bounds the jump-time location error relative to the
    current output stride.  Pass a shared ``model`` when running ensembles
    so the per-atom-number diagonal caches persist across trajectories.
    """
    if model is None:
        model = TwoModeJumpModel(params, rates, mode)
    state = TrajectoryState.phase_state(params.n_total, params.mix)
    threshold = rng.random()
    events: list[JumpEvent] = []
    rows = []

    def advance(state, dt):
        w, g = model.diagonals(state.n_current)
        coeffs = state.coeffs * np.exp((-1j * w - 0.5 * g) * dt)
        return TrajectoryState(
            coeffs=coeffs, n_current=state.n_current, t=state.t + dt,
            norm_sq=float(np.vdot(coeffs, coeffs).real),
        )

    def crossing_time(prob, g, span):
        """Solve norm_sq(dt) = threshold on (0, span] for the decay-only norm.

        The squared norm is a monotone sum of decaying exponentials; a few
        safeguarded Newton steps locate the crossing far below bisect_tol.
        """
        lo, hi = 0.0, span
        dt = 0.5 * span
        tol = bisect_tol * span * 1e-3
        for _ in range(80):
            decayed = prob * np.exp(-g * dt)
            value = float(decayed.sum())
            if value > threshold:
                lo = dt
            else:
                hi = dt
            slope = float(decayed @ g)
            step = (value - threshold) / slope if slope > 0 else 0.0
            nxt = dt + step
            dt = nxt if lo < nxt < hi else 0.5 * (lo + hi)
            if hi - lo < tol:
                break
        return 0.5 * (lo + hi)

    t_prev = 0.0
    for t_out in np.asarray(t_grid, dtype=float):
        span = t_out - t_prev
        while span > 0.0:
            # the cheap real-decay norm decides jump-or-not before any
            # complex phase work happens
            _, g = model.diagonals(state.n_current)
            prob = np.abs(state.coeffs) ** 2
            end_norm = float(prob @ np.exp(-g * span))
            if end_norm > threshold:
                state = advance(state, span)
                break
            t_jump = crossing_time(prob, g, span)
            state = advance(state, t_jump)
            state.coeffs = state.coeffs / math.sqrt(max(state.norm_sq, 1e-300))
            state.norm_sq = 1.0
            state, event = sample_jump(state, rng, model)
            if collect_events:
                events.append(event)
            threshold = rng.random()
            span = t_out - state.t
        rows.append(mode_averages_from_coeffs(
            state.coeffs / math.sqrt(state.norm_sq), state.n_current, model
        ))
        t_prev = t_out
    if collect_events:
        return rows, events
    return rows


@dataclass(frozen=True)
class EnsembleResult:
    """Monte Carlo means over trajectories with jackknife standard errors."""

    t: np.ndarray
    averages: list[ModeAverages]
    xi2: np.ndarray
    xi2_err: np.ndarray
    n_mean: np.ndarray
    n_mean_err: np.ndarray
    mean_spin: np.ndarray       # (n_times, 3)
    n_trajectories: int


def _averages_from_block(block: dict) -> ModeAverages:
    return ModeAverages(**{k: block[k] for k in FIELDS})


def ensemble_observables(params: TwoModeParams, rates: LossRates, t_grid,
                         n_trajectories: int = 4000, seed: int = 1,
                         mode: str = "exact", n_blocks: int = 50,
                         min_trajectories: int = 100) -> EnsembleResult:
    """Trajectory ensemble with block-jackknife errors on xi^2 and <N>.

    Per-trajectory streams are Philox counters keyed by (seed, index), so
    results are bit-reproducible and independent of scheduling order.
    """
    if n_trajectories < min_trajectories:
        raise InsufficientStatistics(
            f"need at least {min_trajectories} trajectories, got {n_trajectories}"
        )
    t_grid = np.asarray(t_grid, dtype=float)
    n_times = t_grid.size
    n_blocks = min(n_blocks, n_trajectories)

    # accumulate per-block sums of every average
    block_sums = [
        {k: np.zeros(n_times, dtype=complex) for k in FIELDS}
        for _ in range(n_blocks)
    ]
    block_counts = np.zeros(n_blocks, dtype=int)
    model = TwoModeJumpModel(params, rates, mode)
    for idx in range(n_trajectories):
        rng = np.random.Generator(np.random.Philox(key=[seed, idx]))
        rows = run_trajectory(params, rates, t_grid, rng, mode=mode, model=model)
        block = idx % n_blocks
        block_counts[block] += 1
        sums = block_sums[block]
        for k in FIELDS:
            sums[k] += np.array([row[k] for row in rows])

    totals = {k: sum(b[k] for b in block_sums) for k in FIELDS}

    def build_averages(sums, count, j):
        values = {k: sums[k][j] / count for k in FIELDS}
        for k in ("n_a", "n_b", "aaaa", "bbbb", "baab"):
            values[k] = float(np.real(values[k]))
        return ModeAverages(**values)

    def xi2_curve(sums, count):
        return np.array([
            squeezing_parameter(moments_from_mode_averages(build_averages(sums, count, j)))
            for j in range(n_times)
        ])

    xi2 = xi2_curve(totals, n_trajectories)
    n_mean = np.real(totals["n_a"] + totals["n_b"]) / n_trajectories

    # delete-one-block jackknife
    xi2_jack = np.empty((n_blocks, n_times))
    n_jack = np.empty((n_blocks, n_times))
    for b in range(n_blocks):
        rest = {k: totals[k] - block_sums[b][k] for k in FIELDS}
        count = n_trajectories - block_counts[b]
        xi2_jack[b] = xi2_curve(rest, count)
        n_jack[b] = np.real(rest["n_a"] + rest["n_b"]) / count
    factor = (n_blocks - 1) / n_blocks
    xi2_err = np.sqrt(factor * np.sum((xi2_jack - xi2_jack.mean(axis=0)) ** 2, axis=0))
    n_err = np.sqrt(factor * np.sum((n_jack - n_jack.mean(axis=0)) ** 2, axis=0))

    averages, spins = [], []
    for j in range(n_times):
        averages.append(build_averages(totals, n_trajectories, j))
        spins.append(moments_from_mode_averages(averages[-1]).mean)
    return EnsembleResult(
        t=t_grid, averages=averages, xi2=xi2, xi2_err=xi2_err,
        n_mean=n_mean, n_mean_err=n_err, mean_spin=np.array(spins),
        n_trajectories=n_trajectories,
    )
