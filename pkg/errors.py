"""
Exception hierarchy for opkit.
Each class carries the exit code the CLI reports for it.
"""


class OpkitError(Exception):
    """Base class for every failure raised by opkit."""

    exit_code = 1
    kind = "error"


class MathematicalFailure(OpkitError):
    """An identity, certificate or mathematical precondition did not hold."""

    exit_code = 1
    kind = "mathematical_failure"


class InputError(OpkitError, ValueError):
    """Malformed input: schema violation, duplicate roots, dimension mismatch."""

    exit_code = 2
    kind = "input_error"


class BudgetExceeded(OpkitError):
    """A configured size budget (Groebner terms, rank dimension) was exceeded."""

    exit_code = 3
    kind = "budget_exceeded"
