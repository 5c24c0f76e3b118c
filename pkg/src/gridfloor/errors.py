"""Exception types shared across the pipeline stages."""


class InvalidNodeError(ValueError):
    """A node id lies outside the grid bounds."""


class CoverageError(ValueError):
    """The hall is too small for the planned runs to cover every node."""


class PayloadParseError(ValueError):
    """A payload log line could not be parsed."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class OrderingError(ValueError):
    """Timestamps that must increase do not."""


class MergeError(ValueError):
    """Ground-truth stream unusable for label matching."""


class IncompleteGridError(ValueError):
    """Frame assembly is missing data for one or more nodes."""

    def __init__(self, missing):
        self.missing = list(missing)
        ids = ", ".join(f"({s},{n})" for s, n in self.missing[:8])
        more = "" if len(self.missing) <= 8 else f" and {len(self.missing) - 8} more"
        super().__init__(f"no data for nodes: {ids}{more}")


class SchemaError(ValueError):
    """Persisted or in-memory data does not match the expected layout."""


class ShapeError(ValueError):
    """A network layer received input of the wrong shape."""


class DomainError(ValueError):
    """A likelihood parameter is outside its valid domain."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, layer_norms):
        self.epoch = epoch
        self.batch = batch
        self.layer_norms = dict(layer_norms)
        norms = ", ".join(f"{k}={v:.3e}" for k, v in self.layer_norms.items())
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}; weight norms: {norms}"
        )


class CrossValidationError(ValueError):
    """Not enough samples to build the requested folds."""


class FitError(ValueError):
    """Model fitting received unusable input."""


class CalibrationError(ValueError):
    """Kinematic limits cannot be calibrated from degenerate labels."""


class AlignmentError(ValueError):
    """Prediction and ground-truth sequences do not line up."""
