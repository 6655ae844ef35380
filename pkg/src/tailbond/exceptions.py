"""Exception hierarchy.

Everything derives from ``TailbondError`` so callers can catch the whole
family; validation problems are also ``ValueError`` and numerical failures
``ArithmeticError`` to play well with generic handlers. The CLI maps the
former to exit code 2 and the latter to exit code 3.
"""


class TailbondError(Exception):
    pass


class ValidationError(TailbondError, ValueError):
    """Bad input: malformed file, schema mismatch, violated precondition."""


class InvalidInput(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class OptionDataError(ValidationError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class InsufficientData(ValidationError):
    pass


class NumericalError(TailbondError, ArithmeticError):
    """Estimation broke down for numerical reasons."""


class NoTailData(NumericalError):
    pass


class DegenerateTail(NumericalError):
    pass


class RankDeficient(NumericalError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class FitFailed(NumericalError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or []
        super().__init__(message)
