"""Exception hierarchy shared by every module of the package."""


class LSSError(Exception):
    """Base class. ``code`` is the machine-readable tag the CLI reports."""

    code = "lss_error"


class DimensionError(LSSError, ValueError):
    code = "dimension_mismatch"


class PreconditionError(LSSError, ValueError):
    code = "precondition_violated"


class SingularTransformError(LSSError, ValueError):
    code = "singular_transform"


class DwellTimeError(LSSError, ValueError):
    code = "dwell_violation"


class ObservabilityError(LSSError):
    code = "observability_failure"


class ClusteringError(LSSError):
    code = "clustering_failure"


class UnsolvablePairError(LSSError):
    code = "unsolvable_pair"


class DisconnectedGraphError(LSSError):
    code = "no_spanning_tree"

    def __init__(self, message, unreachable=()):
        super().__init__(message)
        self.unreachable = tuple(sorted(unreachable))


class ConfigError(LSSError, ValueError):
    code = "invalid_config"
