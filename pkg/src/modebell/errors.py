"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, SectorError -> 3,
InvariantError -> 4.
"""


class ModeBellError(Exception):
    """Base class for all package errors."""


class ConfigError(ModeBellError):
    """Invalid run configuration (bad field, missing file, malformed value)."""


class SectorError(ModeBellError):
    """State left the legal physical sector of an operation.

    Examples: double occupation where a single-particle model is assumed,
    an association firing with no partner atom, a reservoir cutoff too small
    for the requested mean occupation, or a register exceeding the dimension
    budget.
    """


class InvariantError(ModeBellError):
    """A numerical invariant (norm, unitarity, trace) broke tolerance."""
