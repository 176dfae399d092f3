"""Exception hierarchy.

Errors fall into two families that the command line maps to distinct exit
codes: problems with the input data (:class:`DataError`) and failures of the
statistical machinery on otherwise valid data (:class:`StatisticalError`).
"""


class SpatialTestError(Exception):
    """Base class for every error raised by this package."""


class DataError(SpatialTestError):
    """The input data or its description is unusable."""


class StatisticalError(SpatialTestError):
    """The computation cannot proceed on this (valid) input."""


class ValidationError(DataError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class InsufficientPopulations(DataError):
    pass


class DegenerateGeometry(DataError):
    pass


class SchemaError(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing required column {column!r}")


class ParseError(DataError):
    def __init__(self, message, line):
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptyInput(DataError):
    pass


class InvalidArgument(SpatialTestError, ValueError):
    pass


class BandwidthSelectionFailed(StatisticalError):
    pass


class InsufficientCoverage(StatisticalError):
    def __init__(self, coverage, required):
        self.coverage = coverage
        self.required = required
        super().__init__(
            f"only {coverage:.3f} of grid nodes have every population defined "
            f"(min_coverage={required}); the bandwidth is too small or the "
            "populations are spatially disjoint"
        )


class BootstrapDegenerate(StatisticalError):
    pass


class ReplicateError(SpatialTestError):
    """A single resampling replicate (or Monte Carlo trial) failed.

    The original exception is kept as ``__cause__``.
    """

    def __init__(self, index, cause, kind="replicate"):
        self.index = index
        self.kind = kind
        super().__init__(f"{kind} {index} failed: {cause}")
        self.__cause__ = cause
