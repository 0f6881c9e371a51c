"""Exception hierarchy shared by the library and the command-line front end."""


class RieszDMLError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RieszDMLError, ValueError):
    """Invalid configuration: bad parameters, incompatible functional/kernel pairs."""


class InputError(RieszDMLError, ValueError):
    """Malformed input data: missing columns, unknown discrete labels."""


class DegenerateDataError(InputError):
    """Data without the spread or support an operation needs."""


class NumericalError(RieszDMLError, ArithmeticError):
    """A linear solve failed after all fallbacks."""

    def __init__(self, message, fold=None):
        if fold is not None:
            message = f"fold {fold}: {message}"
        super().__init__(message)
        self.fold = fold


class OracleError(RieszDMLError):
    """A reference implementation failed to converge (test infrastructure)."""


class HarnessError(RieszDMLError):
    """Too many failed replications in a simulation run."""
