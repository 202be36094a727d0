"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage errors -> 1, data/file errors -> 2,
contract violations (a policy handing back an infeasible action) -> 3.
"""


class PackError(Exception):
    exit_code = 1


class UsageError(PackError):
    exit_code = 1


class DataError(PackError):
    """Malformed or inconsistent input data (catalogs, scenarios, checkpoints)."""

    exit_code = 2


class VersionMismatchError(DataError):
    pass


class MalformedFileError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class ChecksumMismatchError(DataError):
    pass


class CheckpointError(DataError):
    pass


class DivergenceError(PackError):
    """Training loss went non-finite; aborting beats learning garbage."""


class ContractViolationError(PackError):
    """A component broke an interface promise (e.g. infeasible action)."""

    exit_code = 3
