"""Shapley attributions with neighbourhood, smoothed and anti-neighbourhood reference weighting."""

from .coalitions import enumerate_coalitions, sample_coalitions, shapley_subset_weight
from .core import Attribution, Coalition, Dataset, EvalLedger, FeatureKind, concatenate, masked_eval
from .errors import (
    AdapterExited,
    AnchorsAreConstraints,
    BlackBoxError,
    ConfigError,
    CountMismatch,
    DegenerateNeighbourhood,
    ExactModeUnavailable,
    MalformedResponse,
    NbrShapError,
    StructuralError,
    VarianceUnavailable,
)
from .estimators import (
    EstimatorConfig,
    Mode,
    Weighting,
    explain,
    explain_exact,
    explain_kernelshap,
    explain_sweep,
    normalise,
    reference_weights,
    value_function,
    variance_formula,
)
from .kernels import KernelSpec, SubsetMode, kernel_weights, select_bandwidth, sweep_grid
from .smoothing import AttributionField, build_field, global_attribution, smooth

__version__ = "0.1.0"
