"""Exception hierarchy shared by all modules."""


class OrbifoldError(Exception):
    """Base class for every error raised by orbidiff."""


class ConfigError(OrbifoldError):
    """Malformed atlas, metric, field or scenario description."""


class ValidationError(OrbifoldError):
    """A constructed object violates one of its invariants."""


class DomainError(OrbifoldError):
    """A point lies outside the domain an operation requires."""


class NumericalError(OrbifoldError):
    """Base class for failures of numerical procedures."""


class InversionError(NumericalError):
    """Newton inversion did not converge."""


class CoverageError(OrbifoldError):
    """Points of a chart are not reached by any admissible change of charts."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


class ConsistencyError(OrbifoldError):
    """Two admissible continuations of a computation disagree."""


class ExpDomainError(DomainError):
    """The geodesic with the requested initial vector leaves the atlas before t = 1."""


class BudgetError(OrbifoldError):
    """A section or intermediate point leaves the validity neighbourhood."""


class FlowEscapeError(BudgetError):
    """A flow trajectory left the monitored region."""


class DegenerateMetricError(NumericalError):
    """No admissible injectivity radius could be found."""


class UnsupportedLiftError(OrbifoldError):
    """A map offered for a pullback does not expose a Jacobian."""


class JoinError(OrbifoldError):
    """Two orbifold geodesics cannot be joined."""


class DescentError(OrbifoldError):
    """A lifted map does not descend to a well defined orbit map."""
