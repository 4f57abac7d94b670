"""Exception types shared across the package."""


class PolymerlabError(Exception):
    """Base class for all polymerlab errors."""


class ParameterError(PolymerlabError, ValueError):
    """Invalid numeric or distribution parameter (e.g. sd <= 0, beta <= 0)."""


class WindowError(PolymerlabError, ValueError):
    """A site or region falls outside the lattice window it must live in."""


class SizeError(PolymerlabError, ValueError):
    """Instance too large for an exhaustive computation (enumeration guard)."""


class OrderingError(PolymerlabError, ValueError):
    """Sites violate the coordinatewise partial order required by an operation."""


class HorizonError(PolymerlabError, ValueError):
    """A lattice level exceeds the horizon of a point-to-line construction."""


class DomainError(PolymerlabError, ValueError):
    """A site is outside the domain on which a table or chain is defined."""


class ProvenanceError(PolymerlabError, ValueError):
    """Mismatched inputs: objects built from different environments or setups."""


class ConfigError(PolymerlabError, ValueError):
    """Malformed experiment configuration; message names the offending field."""
