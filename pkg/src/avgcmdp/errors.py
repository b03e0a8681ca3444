"""Exception types raised across the toolkit."""


class AvgCmdpError(Exception):
    """Base class for all toolkit errors."""


class NotErgodic(AvgCmdpError):
    """An induced Markov chain is reducible or periodic."""


class SingularSystem(AvgCmdpError):
    """A linear solve was numerically singular (near-periodic chain)."""


class Infeasible(AvgCmdpError):
    """An optimization problem has an empty feasible set."""


class Unbounded(AvgCmdpError):
    """A linear program has unbounded objective."""


class NumericalFailure(AvgCmdpError):
    """The LP backend failed for numerical reasons."""


class InfeasibleFloor(AvgCmdpError):
    """Per-coordinate floor exceeds total simplex mass."""


class NonConvergence(AvgCmdpError):
    """An iterative procedure exceeded its iteration cap."""


class InvalidHorizon(AvgCmdpError):
    """Episode length exceeds the total number of steps."""


class AssumptionViolated(AvgCmdpError):
    """A required relation between problem parameters fails."""


class NoFeasiblePoint(AvgCmdpError):
    """No span-feasible occupancy measure was found within the search budget."""


class ParseError(AvgCmdpError):
    """A model or config file could not be parsed."""


class InvariantViolation(AvgCmdpError):
    """A validated object violates one of its declared invariants."""
