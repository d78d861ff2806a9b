"""Exception hierarchy shared by every srotlab module."""


class SrotlabError(Exception):
    """Base class for all library errors."""


class UnknownFrame(SrotlabError, KeyError):
    pass


class IndexOutOfRange(SrotlabError, IndexError):
    pass


class NonFinite(SrotlabError, FloatingPointError):
    """A trajectory blew up or produced NaN."""


class NoConvergence(SrotlabError):
    """Neither shooting nor the direct fallback met the endpoint tolerance.

    ``result`` carries the best candidate found, flagged as unconverged.
    """

    def __init__(self, message, result=None, index=None):
        super().__init__(message)
        self.result = result
        self.index = index


class CutLocusPoint(SrotlabError):
    pass


class WrongDimension(SrotlabError, ValueError):
    pass


class Infeasible(SrotlabError):
    pass


class NumericalFailure(SrotlabError):
    pass


class MultiDestinationRow(SrotlabError):
    """Too many plan rows split their mass between destinations."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class DegenerateNeighborhood(SrotlabError):
    pass


class GridTooCoarse(SrotlabError, ValueError):
    pass


class ConfigError(SrotlabError):
    pass


class IoError(SrotlabError, OSError):
    pass
