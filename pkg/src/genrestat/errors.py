"""Exception hierarchy.

Every data/format failure derives from :class:`GenreStatError`; the CLI maps
those to exit code 2. Contract violations (wrong shapes, out-of-range
arguments) are ``ValueError`` subclasses so they read naturally at call sites.
"""


class GenreStatError(Exception):
    """Base class for data, format and training failures."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition."""


class InvalidSignatureError(GenreStatError, ValueError):
    pass


class UnsupportedFormatError(GenreStatError):
    pass


class CorruptFileError(GenreStatError):
    pass


class ProgrammeTooShortError(GenreStatError):
    pass


class NumericOverflowError(GenreStatError, FloatingPointError):
    pass


class DegenerateTrainingError(GenreStatError):
    pass


class FormatError(GenreStatError):
    pass


class InvalidProbabilitiesError(GenreStatError):
    pass


class EmptyProgrammeError(GenreStatError):
    pass


class InvalidInputError(GenreStatError, ValueError):
    pass


class InsufficientDataError(GenreStatError):
    pass


class IncompleteDatasetError(GenreStatError):
    pass


class FractionTooSmallError(GenreStatError):
    pass
