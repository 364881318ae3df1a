"""Exception hierarchy for the detection toolkit."""


class DetensError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DetensError, ValueError):
    """A value violates a documented invariant."""


class ParseError(DetensError):
    """An input document could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class FieldMissingError(ParseError):
    """A required element or key is absent from an input document."""

    def __init__(self, field, context=""):
        msg = f"missing required field {field!r}"
        if context:
            msg += f" in {context}"
        super().__init__(msg)
        self.field = field


class ReferentialIntegrityError(ParseError):
    """An annotation refers to an image or category that does not exist."""


class PreconditionError(DetensError, ValueError):
    """An operation was called with inputs outside its contract."""


class MergeConflictError(DetensError):
    def __init__(self, image_id):
        super().__init__(f"duplicate image_id {image_id!r} across merged manifests")
        self.image_id = image_id


class FeatureFormatError(DetensError):
    """Feature file has bad magic, unsupported version or is truncated."""


class SpecMismatchError(DetensError):
    def __init__(self, expected_dim, actual_dim, what="feature file"):
        super().__init__(
            f"{what} has feature_dim={actual_dim}, expected feature_dim={expected_dim}"
        )
        self.expected_dim = expected_dim
        self.actual_dim = actual_dim


class AlignmentError(DetensError):
    """Inputs that must share keys or ordering do not."""


class CoverageError(DetensError, KeyError):
    """A proposal has no stored feature vector."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DegenerateTrainingError(DetensError, ValueError):
    """Training set lacks positives or negatives."""


class SolverError(DetensError):
    """A linear system could not be solved."""


class DegenerateBoxError(ValidationError):
    """A box computation produced zero or negative width/height."""


class TruncatedFileError(FeatureFormatError):
    """Feature file ends before the declared number of records."""
