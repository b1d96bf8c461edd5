"""Exception and warning types shared across the package."""


class SpinSqueezeError(Exception):
    """Base class for all package errors."""


class ZeroMeanSpin(SpinSqueezeError):
    """Mean spin length is below threshold; squeezing is undefined."""


class DegenerateCoherence(SpinSqueezeError):
    """Mode coherence <b'a> vanished where a finite value is required."""


class NoConvergence(SpinSqueezeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class GridMismatch(SpinSqueezeError):
    """Fields live on different grids."""


class StepTooLarge(SpinSqueezeError):
    """Propagation step violated the norm-drift budget."""


class WindowTooSmall(SpinSqueezeError):
    """Fock window discards too much binomial weight."""


class DesyncFamily(SpinSqueezeError):
    """Fock family entries are not synchronized in time."""


class PhaseUnwrapFailure(SpinSqueezeError):
    """Condensate phase undefined over the whole grid."""


class OverflowGuard(SpinSqueezeError):
    """An exponent left the range that can be re-centered safely."""


class NoBreatheTogether(SpinSqueezeError):
    """No mixing ratio lets both components share one mean field."""


class OutsideCondensate(SpinSqueezeError):
    """Requested point lies beyond the scaled Thomas-Fermi radius."""


class UnstableMixture(SpinSqueezeError):
    """Scattering lengths violate the miscibility condition a_ab < a_aa."""


class DegenerateOptimum(SpinSqueezeError):
    """Trap optimization has no interior optimum (a rate constant is zero)."""


class EmptySystem(SpinSqueezeError):
    """No loss channel can act on the remaining atoms."""


class InsufficientStatistics(SpinSqueezeError):
    """Too few trajectories for ensemble estimates."""


class ConfigError(SpinSqueezeError):
    """Scenario file failed to parse or validate."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotStationaryWarning(UserWarning):
    """Field handed to a stationary-state routine is not stationary."""


class NonUnimodalWarning(UserWarning):
    """Best-time scan found more than one local minimum."""


class LostFractionWarning(UserWarning):
    """Constant-loss-rate result requested beyond its validity window."""


class ShallowTrapWarning(UserWarning):
    """Thomas-Fermi closed form used outside the deep-interaction regime."""
