"""Exception types shared across the package.

The CLI maps these onto its exit codes: ``InputError`` -> 2,
``NumericalError`` -> 1.
"""


class InputError(ValueError):
    """Malformed or inconsistent user input."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-SPD matrix, non-finite state, ...)."""
