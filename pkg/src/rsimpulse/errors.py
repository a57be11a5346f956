class RSImpulseError(Exception):
    """Base class for all solver errors."""


class ModelParseError(RSImpulseError, ValueError):
    """Model document is malformed; ``line`` is 1-based when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DimensionMismatchError(ModelParseError):
    pass


class KernelOverflowError(RSImpulseError, FloatingPointError):
    pass


class PreconditionError(RSImpulseError, ValueError):
    pass


class ConvergenceError(RSImpulseError):
    """Iteration did not reach tolerance; ``diagnostics`` holds the last state."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)


class PositivityError(ConvergenceError):
    pass


class DegenerateError(RSImpulseError):
    pass


class EnumerationCapError(RSImpulseError):
    pass
