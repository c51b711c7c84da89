"""Shared exception types."""


class UsageError(ValueError):
    """An operation was called in a state or with arguments it does not support."""


class ShapeError(ValueError):
    """Array shapes are inconsistent with the declared layer sizes."""


class ParseError(ValueError):
    """Maze text could not be parsed into a valid layout."""


class NoPathError(RuntimeError):
    """No route through the waypoint graph survives the edge-cost cutoff."""


class DegenerateMarginalError(ValueError):
    """A goal has zero marginal probability but nonzero future density."""


class UnreachableGoalError(ValueError):
    """The requested goal cannot be reached from any relevant state."""
