"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to pick an exit code:
``usage``, ``data`` or ``numeric``.
"""


class DivfuseError(Exception):
    category = "data"


class IngestError(DivfuseError):
    """A referenced file is missing or unreadable."""

    def __init__(self, message, sample_id=None):
        super().__init__(message)
        self.sample_id = sample_id


class ParseError(DivfuseError):
    """A feature file cell is not a finite number."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class DimensionError(DivfuseError):
    """Array shapes disagree with the declared schema."""


class ValidationError(DimensionError):
    """A sample violates a schema invariant."""


class ManifestError(DivfuseError):
    """The manifest itself is malformed (bad record, duplicate id)."""


class DegenerateInputError(DivfuseError, ValueError):
    category = "numeric"


class ConfigurationError(DivfuseError, ValueError):
    category = "usage"


class NonFiniteLossError(DivfuseError, FloatingPointError):
    category = "numeric"

    def __init__(self, epoch, batch, param_norm):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} "
            f"(parameter L2 norm {param_norm:.6g})"
        )
        self.epoch = epoch
        self.batch = batch
        self.param_norm = param_norm
