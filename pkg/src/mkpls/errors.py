"""Exception hierarchy. The CLI maps each class to an exit code."""


class MkplsError(Exception):
    pass


class InputError(MkplsError, ValueError):
    """Rejected input: bad shapes, out-of-range values, malformed files."""


class ConfigError(MkplsError, ValueError):
    """Inconsistent experiment configuration."""


class SolverError(MkplsError, ArithmeticError):
    """A linear system could not be solved reliably."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
