"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its documented statuses (1 validation, 2 search/stage failure, 3 I/O).
"""


class MixmasError(Exception):
    exit_code = 1


class ValidationError(MixmasError, ValueError):
    """Bad parameters, config, or manifest content."""

    exit_code = 1


class DimensionError(ValidationError):
    """Operand shapes do not agree."""


class NonFiniteError(MixmasError, FloatingPointError):
    """A forward or update step produced NaN or Inf."""

    exit_code = 2


class GraphConsumedError(MixmasError, RuntimeError):
    exit_code = 2


class SamplingError(MixmasError):
    """The class-distribution gate could not be met."""

    exit_code = 2

    def __init__(self, message: str, best_distance: float):
        super().__init__(message)
        self.best_distance = best_distance


class StageError(MixmasError):
    """A search stage could not produce a choice."""

    exit_code = 2


class ProvenanceError(ValidationError):
    """An architecture references ledger records that do not exist."""


class DataIOError(MixmasError, OSError):
    exit_code = 3


class BadMagicError(DataIOError):
    pass


class TruncatedPayloadError(DataIOError):
    pass


class DanglingPathError(DataIOError):
    pass
