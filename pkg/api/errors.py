class LabError(Exception):
    """Base class for every error raised by the lab."""


class ConfigError(LabError):
    """The experiment config failed validation or is internally inconsistent."""


class InvalidActionError(LabError):
    """A control action index is outside the available action set."""


class EnumerationTooLargeError(LabError):
    """An exact enumeration would exceed the configured cap.

    Sampling-based estimation is not provided; shrink the patch, palette or
    horizon instead.
    """


class SegmentTooShortError(LabError):
    """A segment holds fewer observation steps than the requested horizon."""


class MissingSnapshotError(LabError):
    """The snapshot ring has no parameters for a required tick."""


class ConvergenceError(LabError):
    """Blahut-Arimoto ran out of iterations before the bracket closed."""

    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class NotNormalizedError(LabError):
    """A distribution does not sum to one within tolerance."""


class InefficiencyBoundError(LabError):
    """An inefficiency measure exceeds its maximum."""


class EmptyFrontierError(LabError):
    """A frontier distance was requested against an empty frontier."""


class NonMonotoneTickError(LabError):
    """A ledger charge arrived with a tick that does not increase."""


class NonFiniteGradientError(LabError):
    """A policy-gradient contribution was NaN or infinite."""

    def __init__(self, message: str, episode_id: int):
        super().__init__(message)
        self.episode_id = episode_id


class BudgetMismatchError(LabError):
    """Compared policy arms were not run under identical caps."""


class UnknownProbeError(LabError):
    """The requested hypothesis probe id does not exist."""


class VerificationError(LabError):
    """A summary recomputed from logs differs from the stored summary."""
