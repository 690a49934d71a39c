"""Exception hierarchy.

Every error belongs to one of three families, which the CLI maps to exit
codes: configuration (2), data (3) and numeric (4).
"""


class GraphFaultError(Exception):
    """Base class for all package errors."""


class ConfigError(GraphFaultError):
    pass


class DataError(GraphFaultError, ValueError):
    pass


class NumericError(GraphFaultError, ArithmeticError):
    pass


# ingest
class MalformedRow(DataError):
    pass


class EmptyFile(DataError):
    pass


class NonFiniteSample(DataError):
    pass


class InvalidSpec(ConfigError, ValueError):
    pass


class NegativeSigma(DataError):
    pass


# spectral / segmentation / features
class TooShort(DataError):
    pass


class SegmentTooShort(DataError):
    pass


class NonFinite(NumericError, ValueError):
    pass


class NegativeProbability(DataError):
    pass


class WindowExceedsSignal(DataError):
    pass


class NoSegments(DataError):
    pass


class EmptySearchSpace(ConfigError, ValueError):
    pass


class EmptyFitSet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# clustering / graph
class TooManyClusters(DataError):
    pass


class ClusterTooSmall(DataError):
    pass


class Disconnected(NumericError, ValueError):
    pass


class SingletonGraph(NumericError, ValueError):
    pass


class NoEdges(NumericError, ValueError):
    pass


class NoEligibleSubgraphs(NumericError, ValueError):
    pass


class UnmappedRow(DataError):
    pass


# model / eval
class DegenerateLabels(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class KTooLarge(DataError):
    pass


class LengthMismatch(DataError):
    pass
