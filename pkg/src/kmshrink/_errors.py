"""Exception hierarchy shared across the package.

Input problems derive from ``ValueError`` and numerical breakdowns from
``ArithmeticError`` so the CLI can map them onto distinct exit codes.
"""


class KmshrinkError(Exception):
    """Base class for all package errors."""


class InputError(KmshrinkError, ValueError):
    """Malformed or inconsistent user input."""


class DegenerateSampleError(InputError):
    """The sample carries no spread (e.g. all points identical)."""


class NumericalError(KmshrinkError, ArithmeticError):
    """A numerical routine failed or a system was singular."""


class SingularSystemError(NumericalError):
    pass


class DegenerateGramError(NumericalError):
    pass
