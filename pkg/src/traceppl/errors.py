"""Exception hierarchy shared by every layer of the engine."""


class PPLError(Exception):
    """Base class for all engine errors."""


class ParseError(PPLError):
    """Syntax or semantic error with a 1-based source position."""

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class LexError(ParseError):
    pass


class EvalError(PPLError):
    """Model evaluation failed because of a bug in the model or its data."""

    def __init__(self, message, span=None):
        self.span = span
        if span is not None:
            message = f"{span[0]}:{span[1]}: {message}"
        super().__init__(message)


class DimensionError(EvalError):
    pass


class ModelDomainError(PPLError):
    """Invalid numeric input computed at run time (e.g. a negative scale).

    Samplers treat this as a rejected proposal rather than a crash.
    """


class NotDifferentiable(PPLError):
    pass


class SpecializationError(PPLError):
    def __init__(self, symbol, detail=""):
        self.symbol = symbol
        super().__init__(f"cannot specialize {symbol!r}" + (f": {detail}" if detail else ""))


class StateError(PPLError):
    pass


class TraceError(PPLError):
    pass


class NonFiniteLogp(TraceError):
    """A NaN reached the log-probability accumulator (overflowing values, or a model bug)."""


class NotFound(PPLError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ClassifyError(PPLError):
    pass


class ChainFormatError(PPLError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
