"""Exception hierarchy shared by every layer of the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class SchemaError(EngineError):
    pass


class UnknownAttribute(SchemaError):
    def __init__(self, name: str, available=()):
        self.name = name
        hint = f" (available: {', '.join(available)})" if available else ""
        super().__init__(f"unknown attribute {name!r}{hint}")


class AmbiguousAttribute(SchemaError):
    def __init__(self, name: str, candidates):
        self.name = name
        super().__init__(f"attribute {name!r} is ambiguous: {', '.join(candidates)}")


class TypeMismatch(EngineError):
    pass


class DimensionMismatch(TypeMismatch):
    pass


class NonFiniteError(EngineError):
    pass


class KeyViolation(EngineError):
    pass


class NonPositiveDefinite(EngineError):
    pass


class SingularDesign(EngineError):
    pass


class NotAProbabilityVector(EngineError):
    pass


class EmptyComponent(EngineError):
    pass


class EmptyClusterWarning(UserWarning):
    pass


class ParseError(EngineError):
    def __init__(self, message: str, line: int, column: int):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{message} at line {line}, column {column}")


class ValidationError(EngineError):
    """A structural violation found by the validator.

    ``code`` is a stable diagnostic identifier such as ``MultipleUnionByUpdate``.
    """

    def __init__(self, code: str, name: str, message: str = ""):
        self.code = code
        self.name = name
        text = f"{code}: {name}"
        if message:
            text += f" ({message})"
        super().__init__(text)


class LoweringError(EngineError):
    pass


class UnknownFunction(LoweringError):
    pass


class ArityMismatch(LoweringError):
    pass


class EvaluationError(EngineError):
    """Runtime failure inside a recursive evaluation, tagged with its iteration."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {cause}")
