class MonoflowError(Exception):
    """Base class for all errors raised by monoflow."""


class InputError(MonoflowError, ValueError):
    """Invalid user input: bad dimensions, parameters or config."""


class InvariantError(MonoflowError, RuntimeError):
    """An internal invariant was violated (e.g. a non-symmetric structure matrix)."""


class ConstructionError(MonoflowError, RuntimeError):
    """A built-in process construction failed its own pathwise hypothesis."""
