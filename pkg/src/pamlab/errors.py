"""Exception hierarchy shared by all modules.

The CLI maps these to distinct exit codes, so library code should raise
the most specific type that applies rather than bare ValueError.
"""


class PamlabError(Exception):
    """Base class for all package errors."""


class ConfigError(PamlabError):
    """Invalid or inconsistent configuration / parameters."""


class RangeError(PamlabError):
    """A query or path left the domain it was defined on."""


class ResourceError(PamlabError):
    """Requested computation exceeds the configured memory/event budget."""


class NumericError(PamlabError):
    """A numerical procedure failed to converge or lost validity."""


class ContractError(PamlabError):
    """An internal pre/postcondition was violated by the caller."""


class PropertyViolation(PamlabError):
    """A verified mathematical property failed on concrete data."""
