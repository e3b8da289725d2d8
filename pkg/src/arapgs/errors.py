"""Exception types shared across the toolkit."""


class ArapGSError(Exception):
    """Base class for all arapgs errors."""


class FormatError(ArapGSError):
    """Malformed container (bad PLY header line, truncated payload, ...)."""


class SchemaError(ArapGSError):
    """Structurally valid file whose content violates the expected schema."""


class DataError(ArapGSError):
    """Payload carries invalid values (NaN/Inf)."""


class EmptySelectionError(ArapGSError):
    """A region filter or sampling step selected nothing."""


class ConstraintConflictError(ArapGSError):
    """Two handles resolve to the same graph node with different targets."""


class SolverError(ArapGSError):
    """The global linear system could not be solved."""


class EnhancerError(ArapGSError):
    """An external image enhancer failed or broke its contract."""


class ConfigError(ArapGSError):
    """Invalid run configuration or manifest."""
