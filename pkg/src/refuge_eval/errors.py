"""Exception and warning types shared by the toolkit.

Every validation failure derives from :class:`ValidationError`, which the CLI
maps to exit code 2.
"""


class RefugeEvalError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(RefugeEvalError, ValueError):
    """Input violates a documented precondition."""


# mask codec
class MalformedHeader(ValidationError):
    pass


class UnsupportedEncoding(ValidationError):
    pass


class StrictValueViolation(ValidationError):
    def __init__(self, value, row, col):
        self.value, self.row, self.col = value, row, col
        super().__init__(
            f"gray value {value} at (row={row}, col={col}) is not one of 0/128/255"
        )


# metrics / tables
class DimensionMismatch(ValidationError):
    pass


class MissingPrediction(ValidationError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__("missing predictions for: " + ", ".join(self.missing))


class InvalidGroundTruth(ValidationError):
    pass


class DegenerateLabels(ValidationError):
    pass


class IdMismatch(ValidationError):
    pass


class LabelConflict(ValidationError):
    pass


# ranking
class NonFiniteValue(ValidationError):
    pass


class BadWeights(ValidationError):
    pass


class IncompleteRow(ValidationError):
    pass


# ensemble
class TooFewMasks(ValidationError):
    pass


# stats
class LengthMismatch(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class TooFewGroups(ValidationError):
    pass


class EmptyGroup(ValidationError):
    pass


# synth
class OutOfBounds(ValidationError):
    pass


class InfeasibleConfig(ValidationError):
    pass


class DegenerateInputWarning(UserWarning):
    """A degenerate input was scored with a fallback convention instead of failing."""
