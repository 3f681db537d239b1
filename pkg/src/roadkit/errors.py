"""Exception hierarchy shared by all roadkit modules."""


class RoadkitError(Exception):
    """Base class for all errors raised by roadkit."""


class ValidationError(RoadkitError):
    """An input value violates a documented invariant."""


class ParseError(ValidationError):
    """A label or document could not be parsed.

    Carries the 1-based line number and the offending field name when known.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SchemaError(ValidationError):
    """A JSON document is missing required structure."""


class CalibrationError(ValidationError):
    """A calibration document holds an invalid rotation or camera matrix."""


class SerializationError(ValidationError):
    """A record cannot be written in the requested format."""


class FrameMismatchError(ValidationError):
    """A value is expressed in a different coordinate frame than expected."""


class BehindCameraError(RoadkitError):
    """A point lies at or behind the camera plane and cannot be projected."""


class EmptyInputError(ValidationError):
    """An operation requiring a nonempty input received an empty one."""


class GenerationError(RoadkitError):
    """A synthetic scene request cannot be satisfied."""


class PlanError(ValidationError):
    """An experiment plan violates its structural constraints."""


class RegistryError(PlanError):
    """An experiment plan references a dataset unknown to the registry."""


class FrameReferenceError(ValidationError):
    """Detections reference a frame id absent from the ground-truth manifest."""


class TaxonomyError(ValidationError):
    """A record uses a class name outside the manifest's taxonomy."""
