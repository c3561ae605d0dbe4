"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class MethInterError(Exception):
    """Base class for all errors raised by methinter."""


class DataError(MethInterError, ValueError):
    """Invalid or inconsistent input data (CLI exit code 2)."""


class NumericalError(MethInterError, ArithmeticError):
    """A numerical procedure failed or hit a degenerate case (CLI exit code 3)."""


class ConfigError(MethInterError, ValueError):
    """Malformed configuration file or option set (CLI exit code 1)."""


class StudyError(MethInterError, RuntimeError):
    """A Monte Carlo study could not be completed (too many failed replicates)."""
