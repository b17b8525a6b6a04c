"""Exception hierarchy shared by all stages of the toolkit."""


class SiqrngError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""


class InvalidParameterError(SiqrngError, ValueError):
    """A parameter is outside its admissible range.

    ``field`` names the offending parameter so config diagnostics can point
    at it directly.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DegenerateInputError(SiqrngError, ValueError):
    """The data cannot support the requested estimate (e.g. no X-basis events)."""


class NoSolutionError(SiqrngError, ArithmeticError):
    pass


class DimensionMismatchError(SiqrngError, ValueError):
    pass


class InsufficientDataError(SiqrngError, ValueError):
    pass


class FormatError(SiqrngError, ValueError):
    """A file on disk does not follow the expected layout."""


class ConfigError(InvalidParameterError):
    """A configuration file could not be parsed or holds an invalid entry."""


class PipelineError(SiqrngError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
