"""Exception hierarchy shared across the planning stages.

The three leaf categories map onto process exit codes and HTTP statuses:
validation (bad inputs), infeasibility (well-formed but unsolvable), and
numerical failure (conditioning).
"""


class PlanningError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PlanningError):
    """Malformed input: schema violations, broken invariants, bad arguments.

    ``field`` optionally carries a dotted path into the offending structure.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class InfeasibleError(PlanningError):
    """The instance is valid but admits no solution under its constraints."""

    def __init__(self, message, deficit=None, shortest_length=None):
        super().__init__(message)
        self.deficit = deficit
        self.shortest_length = shortest_length


class NumericalError(PlanningError):
    """A linear-algebra or optimization step failed beyond recovery."""

    def __init__(self, message, jitters_tried=()):
        super().__init__(message)
        self.jitters_tried = tuple(jitters_tried)


class GenerationError(PlanningError):
    """Randomized scenario construction exhausted its retry budget."""
