"""Exception hierarchy shared by the library and the CLI."""


class SQPError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class FormatError(SQPError, ValueError):
    """Input file is malformed or violates a data invariant (exit code 2)."""

    exit_code = 2


class ContractError(SQPError, ValueError):
    """An operation was called outside its preconditions (exit code 3)."""

    exit_code = 3
