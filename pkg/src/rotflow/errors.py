"""Exception types shared across the package."""


class RotflowError(Exception):
    """Base class for all package-specific errors."""


class InvalidProfileError(RotflowError):
    """Profile arrays are structurally invalid (shape, ordering, signs)."""


class SingularProfileError(RotflowError):
    """Profile has phi <= 0 away from the axis; curvature is undefined."""


class InvalidParameterError(RotflowError):
    """A constructor or solver parameter is out of range."""


class SingularStateError(RotflowError):
    """Time stepping produced a state past the singular time."""


class BlowupOverrunError(RotflowError):
    """Curvature exceeded the hard overrun ceiling before a stop condition."""


class NoNeckError(RotflowError):
    """Requested neck structure is absent (or unresolvable on this grid)."""


class NoEstimateError(RotflowError):
    """Singular-time extrapolation has no usable trailing window."""


class NumericFailureError(RotflowError):
    """An underlying numerical routine failed to converge."""


class CannotNormalizeError(RotflowError):
    """Rescaling anchor curvature is too small to normalize by."""


class NotApplicableError(RotflowError):
    """Requested measurement does not apply to the given data."""


class RunAbortedError(RotflowError):
    """Evolution aborted; carries the last good state and partial records.

    Attributes:
        state: the last valid (t, profile) pair, or None.
        trajectory: partial diagnostics records collected before the abort.
    """

    def __init__(self, message, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory if trajectory is not None else []


class ConfigError(RotflowError):
    """Configuration text is malformed or contains unknown/invalid keys."""
