"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`BlackBoxError` -> 3, any other :class:`NbrShapError` -> 4.
"""


class NbrShapError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(NbrShapError, ValueError):
    """Shapes or schemas of the inputs do not line up."""


class ConfigError(NbrShapError):
    """Invalid run configuration."""


class ExactModeUnavailable(NbrShapError):
    """Exact enumeration requested for too many features."""


class AnchorsAreConstraints(NbrShapError, ValueError):
    """The empty and the full coalition have no finite regression weight."""


class DegenerateNeighbourhood(NbrShapError):
    """Every kernel weight underflowed to zero."""

    def __init__(self, min_distance):
        self.min_distance = float(min_distance)
        super().__init__(
            "all kernel weights are zero; smallest distance to a reference "
            f"is {self.min_distance:.6g}"
        )


class VarianceUnavailable(NbrShapError):
    """Variance estimate requested where it is not defined."""


class BlackBoxError(NbrShapError):
    """The model failed while evaluating a batch.

    ``offset`` is the index of the first row of the failing batch.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (batch offset {offset})"
        super().__init__(message)


class AdapterExited(BlackBoxError):
    """External adapter process terminated."""


class MalformedResponse(BlackBoxError):
    """External adapter wrote a line that is not a single number."""

    def __init__(self, message, offset=None, line_index=None):
        self.line_index = line_index
        super().__init__(message, offset)


class CountMismatch(BlackBoxError):
    """External adapter returned a different number of values than rows sent."""
