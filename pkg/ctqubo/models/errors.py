from typing import Optional

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CAPACITY = 4

class CtQuboError(Exception):
    exit_code = EXIT_DATA

class InvalidArgument(CtQuboError, ValueError):
    exit_code = EXIT_USAGE

class DimensionError(CtQuboError, ValueError):
    pass

class DomainError(CtQuboError, ValueError):
    pass

class DegenerateRow(CtQuboError, ValueError):
    pass

class DegenerateReference(CtQuboError, ValueError):
    pass

class EncodingError(CtQuboError, ValueError):
    pass

class DegenerateHistogram(CtQuboError, ValueError):
    pass

class BoundViolation(CtQuboError, ArithmeticError):
    """Achieved energy fell below the analytic minimum of -offset."""

class IoError(CtQuboError, OSError):
    pass

class TooLarge(CtQuboError):
    exit_code = EXIT_CAPACITY

class ParseError(CtQuboError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path

        location = ""
        if path:
            location += f"{path}:"
        if line is not None:
            location += f"line {line}: "
        elif location:
            location += " "

        super().__init__(f"{location}{message}")
