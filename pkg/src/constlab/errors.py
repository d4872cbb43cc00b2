"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class ConstlabError(Exception):
    exit_code = 1


class ConfigError(ConstlabError, ValueError):
    """A parameter or input file failed validation."""

    exit_code = 1


class DegenerateInputError(ConfigError):
    """Input is well-formed but admits no meaningful answer."""


class BudgetError(ConstlabError):
    """Requested work exceeds a configured size budget."""

    exit_code = 2


class NumericalIntegrityError(ConstlabError, ArithmeticError):
    """A quantity that must be nonnegative, or a proven inequality, failed numerically."""

    exit_code = 3
