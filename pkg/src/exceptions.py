"""Exception hierarchy shared by the library and the CLI."""

from typing import Optional


class AdugsError(Exception):
    """Base class for all errors raised by this package"""


class ConfigurationError(AdugsError, ValueError):
    """Invalid or inconsistent configuration"""


class ParseError(AdugsError):
    """Malformed input file"""

    def __init__(self, message: str, line_number: int = 0, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = f"{path}:" if path else ""
        if line_number:
            location += f"{line_number}: "
        elif location:
            location += " "
        super().__init__(f"{location}{message}")


class VersionError(ParseError):
    """Input file written by an unsupported format version"""


class NumericalError(AdugsError):
    """A numerical routine could not produce a result"""


class InsufficientDataError(NumericalError):
    """Not enough samples for the requested estimate"""


class DegenerateGeometryError(NumericalError):
    """Input geometry does not constrain the estimate"""
