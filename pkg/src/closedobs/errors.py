"""Exception types shared across the package."""


class ClosedObsError(Exception):
    """Base class; ``code`` is the machine-readable tag printed by the CLI."""

    code = "error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FormatError(ClosedObsError):
    """Unparseable or schema-violating input file."""

    code = "format"


class InvariantError(ClosedObsError):
    """A type or operation precondition does not hold."""

    code = "invariant"


class BuildError(ClosedObsError):
    """The pipeline produced a degenerate result (e.g. no coordinates)."""

    code = "build"


class ExtrapolationError(ClosedObsError):
    """A query lies so far outside the data that no weight survives."""

    code = "extrapolation"


class ModelFileError(ClosedObsError):
    """Corrupt model file or unsupported format version."""

    code = "model-file"
