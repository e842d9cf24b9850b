"""Exception types shared across the package."""


class KgactiveError(Exception):
    """Base class for all package errors."""

    code = "error"


class DatasetError(KgactiveError):
    """Dataset directory or file cannot be loaded."""

    code = "dataset_error"


class ParseError(DatasetError):
    """Malformed record in a dataset file."""

    code = "parse_error"

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ReferentialIntegrityError(DatasetError):
    """A link references an entity absent from its KG."""

    code = "referential_integrity"


class ConfigError(KgactiveError):
    """Invalid configuration value."""

    code = "config_error"


class DomainError(KgactiveError):
    """Operation input outside its domain (unknown ids, empty sets, shape mismatch)."""

    code = "domain_error"


class DegenerateInputError(DomainError):
    """Input carries no usable signal (e.g. an all-zero uncertainty mass)."""

    code = "degenerate_input"


class TrainingError(KgactiveError):
    """Model training failed (e.g. loss became non-finite)."""

    code = "training_error"


class OneToOneViolationError(KgactiveError):
    """A label would consume a KG2 entity already matched to another entity."""

    code = "one_to_one_violation"


class ConflictError(KgactiveError):
    """A duplicate submission contradicts an earlier answer for the same query."""

    code = "conflict"


class UnknownQueryError(KgactiveError):
    """A label was posted for an entity that is not in the pending batch."""

    code = "unknown_query"
