"""Exception hierarchy shared by the library and the CLI."""


class HoqriError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParseError(HoqriError, ValueError):
    """Malformed ``.tns`` input."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IndexRangeError(ParseError, IndexError):
    """Coordinate outside the admissible range."""


class NonFiniteValueError(ParseError):
    """NaN or infinite tensor value."""


class ShapeError(HoqriError, ValueError):
    pass


class CapacityError(HoqriError, MemoryError):
    """A dense intermediate would exceed the configured allocation cap."""

    exit_code = 3


class DegenerateStateError(HoqriError, ArithmeticError):
    """The iteration reached a state it cannot continue from."""

    exit_code = 4

    def __init__(self, message, mode=None):
        self.mode = mode
        super().__init__(message)


class ContractError(HoqriError, ValueError):
    """An input or result violates a documented numerical contract."""


class DiagnosticError(HoqriError, ArithmeticError):
    """A quantity that holds exactly in theory was violated beyond tolerance."""


class InfeasibleError(HoqriError, ValueError):
    pass
