"""Exception hierarchy shared by every osculate module.

The CLI maps ConfigError/ExpressionError to exit code 2; anything else raised
while a check runs is recorded as a failed check.
"""


class OsculateError(Exception):
    """Base class for all errors raised by osculate."""


# --- Expressions ---

class ExpressionError(OsculateError):
    pass


class ExprSyntaxError(ExpressionError):
    """Malformed expression text; position is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.message = message
        self.position = position


class UnknownIdentifier(ExpressionError):
    def __init__(self, name: str, position: int | None = None):
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.position = position


class NonIntegerExponent(ExpressionError):
    def __init__(self, position: int):
        super().__init__(f"exponent must be an integer constant at position {position}")
        self.position = position


class UnboundVariable(ExpressionError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


# --- Configuration ---

class ConfigError(OsculateError):
    pass


class SchemaError(ConfigError):
    pass


class DimensionMismatch(ConfigError, ValueError):
    pass


# --- Geometry ---

class GeometryError(OsculateError):
    pass


class NotCentered(GeometryError):
    pass


class DegenerateFrame(GeometryError):
    pass


class NotHChartChange(GeometryError):
    pass


class NotHCompatible(GeometryError):
    pass


class NotTangentToH(GeometryError):
    pass


class FieldNotInH(GeometryError):
    pass


# --- Numerics ---

class NumericsError(OsculateError):
    pass


class DivisionByZero(NumericsError, ArithmeticError):
    """A denominator vanished while evaluating at a sample point."""


class NonSmoothSample(NumericsError):
    pass


class StepUnderflow(NumericsError):
    pass


class NonFiniteState(NumericsError):
    pass


class GeodesicBlowup(NumericsError):
    pass


class NewtonDivergence(NumericsError):
    pass


class DomainError(NumericsError):
    pass


# --- Groups ---

class GroupError(OsculateError):
    pass


class NonpositiveScale(GroupError, ValueError):
    pass


class SkewPartMismatch(GroupError):
    pass


# --- Exponential maps ---

class ExpMapError(OsculateError):
    pass


class NotHPreserving(ExpMapError):
    pass


class InvalidHChartFamily(ExpMapError):
    pass
