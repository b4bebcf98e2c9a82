"""Exception hierarchy shared by every nnopf module."""


class NnopfError(Exception):
    """Base class for all package errors."""


# grid
class NetworkError(NnopfError, ValueError):
    pass


class CycleDetected(NetworkError):
    pass


class Disconnected(NetworkError):
    pass


class MultipleSlack(NetworkError):
    pass


class NonPositiveBase(NetworkError):
    pass


class InvalidRange(NnopfError, ValueError):
    pass


class NotConverged(NnopfError):
    """Power flow hit its iteration cap; ``result`` holds the last iterate."""

    def __init__(self, iterations, result=None):
        super().__init__(f"power flow did not converge in {iterations} iterations")
        self.iterations = iterations
        self.result = result


class NumericalFailure(NnopfError):
    pass


# devices
class WindowOutOfHorizon(NnopfError, ValueError):
    pass


# scenarios / surrogate
class TooManyDivergences(NnopfError):
    pass


class EmptySplit(NnopfError, ValueError):
    pass


class DimensionMismatch(NnopfError, ValueError):
    pass


class NonFiniteLoss(NnopfError):
    pass


# encoder
class UnboundedInput(NnopfError, ValueError):
    pass


class InvalidBounds(NnopfError, ValueError):
    pass


# milp
class NumericalInstability(NnopfError):
    pass


class Infeasible(NnopfError):
    pass


class TooManyBinaries(NnopfError, ValueError):
    pass


class LimitReached(NnopfError):
    """Branch and bound stopped on a node or time limit.

    ``solution`` carries the best incumbent found so far (``values`` is None
    when no integral point was found) together with the proved bound.
    """

    def __init__(self, solution):
        super().__init__(f"limit reached after {solution.nodes} nodes (gap={solution.gap})")
        self.solution = solution


# opf
class OrderingMismatch(NnopfError, ValueError):
    pass


class InfeasibleWindow(NnopfError, ValueError):
    pass


class PowerFlowDiverged(NnopfError):
    def __init__(self, step):
        super().__init__(f"AC power flow diverged at step {step}")
        self.step = step
