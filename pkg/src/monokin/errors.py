"""Exception hierarchy. CLI exit codes key off these classes."""


class MonokinError(Exception):
    """Base class for all library errors."""


class ValidationError(MonokinError, ValueError):
    """Input violates a documented invariant."""


class StructureError(ValidationError):
    """Malformed skeleton or model tree."""


class ShapeMismatchError(ValidationError):
    """Array sizes that must agree do not."""


class NotFoundError(MonokinError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParameterError(ValidationError):
    """A numeric parameter is outside its admissible range."""


class RangeError(ValidationError):
    """Coordinate values outside the model's ranges."""


class ScalingError(ValidationError):
    """Model scaling cannot be computed from the given markers."""


class ProjectionError(MonokinError):
    """Point lies behind the camera."""


class NumericalError(MonokinError, FloatingPointError):
    """Non-finite value produced during evaluation."""


class ConvergenceError(MonokinError):
    """Solver stopped without meeting its tolerances."""


class SchemaError(ValidationError):
    """Named columns or fields do not line up."""
