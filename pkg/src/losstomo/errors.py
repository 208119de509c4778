"""Exception hierarchy shared by every module in the package."""


class TomographyError(Exception):
    """Base class for all errors raised by losstomo."""


class TopologyError(TomographyError, ValueError):
    """Malformed topology description."""


class CycleDetected(TopologyError):
    pass


class MultipleRoots(TopologyError):
    pass


class RateOutOfRange(TomographyError, ValueError):
    """A pass rate or missing-data rate outside its admissible interval."""


class DivisionByZeroPath(TomographyError, ZeroDivisionError):
    """A parent path pass rate of zero makes the link rate undefined."""


class LeafNode(TomographyError, ValueError):
    """Per-node statistics were requested for a node without children."""


class OrderOutOfRange(TomographyError, ValueError):
    pass


class IncompleteStats(TomographyError):
    """Co-observation counts needed by a computation were not collected."""


class InvalidData(TomographyError):
    """The observations cannot support the requested estimator.

    Typically raised when a required co-observation count is zero.
    """


class NoRootInRange(TomographyError):
    """The likelihood equation has no root in the admissible interval."""


class AllWeightsZero(TomographyError, ValueError):
    pass
