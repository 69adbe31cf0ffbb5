"""Exception hierarchy shared by all paraconv modules."""


class ParaconvError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ParaconvError, ValueError):
    """Non-finite coefficients, malformed records, out-of-range fields."""


class EmptyResultError(ParaconvError, ValueError):
    """An operation would return nothing (e.g. roots of a constant)."""


class PoleAtFrequencyError(ParaconvError, ZeroDivisionError):
    """The transfer function has a pole exactly on the evaluation point."""


class SingularLoopError(ParaconvError, ZeroDivisionError):
    """Feedback interconnection with 1 + g*h identically zero."""


class InfiniteNormError(ParaconvError, ValueError):
    """H-infinity norm requested for an unstable system."""


class ImproperSystemError(ParaconvError, ValueError):
    """Numerator degree exceeds denominator degree."""


class InvalidOperatingPointError(ParaconvError, ValueError):
    """Converter topology cannot reach the requested output voltage."""


class DegenerateStateError(ParaconvError, ZeroDivisionError):
    """Duty cycle inversion divides by a (near) zero voltage."""


class InfeasibleAllocationError(ParaconvError, ValueError):
    """Sharing ratios cannot be realised (e.g. alpha_k = 0 with beta_k > 0)."""


class InvariantViolationError(ParaconvError, AssertionError):
    """A multi-converter rational identity does not hold."""


class InsufficientWindowError(ParaconvError, ValueError):
    """Measurement window shorter than one period of the analysed tone."""


class SynthesisFailedError(ParaconvError, RuntimeError):
    """Fixed-structure search found no stabilizing parameter vector."""

    def __init__(self, message, best_params=None, best_violation=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_violation = best_violation


class DivergenceError(ParaconvError, FloatingPointError):
    """Simulation state became non-finite or degenerate."""

    def __init__(self, message, last_valid_time):
        super().__init__(message)
        self.last_valid_time = last_valid_time
