"""Exception hierarchy shared by every exgs module."""


class ExgsError(Exception):
    """Base class for all errors raised by exgs."""


class InvalidParameterError(ExgsError, ValueError):
    pass


class FormatError(ExgsError):
    """Input bytes are not in the expected container format."""


class UnsupportedFormatError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class SchemaError(FormatError):
    """A PLY header is missing required properties."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing required properties: " + ", ".join(self.missing))


class TruncationError(FormatError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"truncated body: expected {expected} bytes, got {actual}")


class CorruptionError(FormatError):
    """A container decoded to something inconsistent with its header."""


class CapacityError(ExgsError):
    pass
