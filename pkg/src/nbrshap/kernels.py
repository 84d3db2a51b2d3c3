"""Distances and exponential kernels over standardised features.

Continuous features contribute ``((a_j - b_j) / scale_j)**2`` to the squared
distance; categorical features contribute 1 on mismatch and 0 otherwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import Coalition, Dataset, mask_matrix
from .errors import DegenerateNeighbourhood, StructuralError

SIGMA_MIN = 1e-3


class SubsetMode(str, enum.Enum):
    FULL_VECTOR = "full"
    DROPPED_ONLY = "dropped"


@dataclass(frozen=True)
class KernelSpec:
    """Exponential kernel ``exp(-sum_j delta_j**2 / sigma_j**2)``.

    ``bandwidth`` is a scalar, or one value per feature for a diagonal
    bandwidth matrix. A per-feature 0 keeps only exact matches on that
    feature; ``inf`` ignores the feature.
    """

    bandwidth: float | tuple[float, ...]
    subset_mode: SubsetMode = SubsetMode.FULL_VECTOR

    def __post_init__(self):
        bw = self.bandwidth
        if np.ndim(bw) == 0:
            bw = float(bw)
            if not bw > 0:
                raise StructuralError(f"scalar bandwidth must be > 0, got {bw}")
        else:
            bw = tuple(float(b) for b in bw)
            if any(not b >= 0 for b in bw):
                raise StructuralError("per-feature bandwidths must be >= 0")
        object.__setattr__(self, "bandwidth", bw)
        object.__setattr__(self, "subset_mode", SubsetMode(self.subset_mode))

    @property
    def diagonal(self) -> bool:
        return isinstance(self.bandwidth, tuple)

    def label(self) -> str:
        if self.diagonal:
            return ";".join(f"{b:.17g}" for b in self.bandwidth)
        return f"{self.bandwidth:.17g}"


@dataclass(frozen=True)
class WeightVector:
    raw: np.ndarray
    normalised: np.ndarray

    @property
    def ess(self) -> float:
        w = self.raw
        return float(w.sum() ** 2 / (w @ w))


def squared_deltas(x, refs: Dataset) -> np.ndarray:
    """Per-feature squared standardised differences, shape ``(L, M)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (refs.n_features,):
        raise StructuralError("instance width does not match reference schema")
    diff = refs.rows - x
    sq = (diff / refs.scale) ** 2
    return np.where(refs.categorical, (diff != 0).astype(np.float64), sq)


def _subset_columns(subset, m):
    if subset is None:
        return np.ones(m, dtype=bool)
    if isinstance(subset, Coalition):
        return subset.indicator()
    arr = np.asarray(subset)
    if arr.dtype == bool:
        return arr
    cols = np.zeros(m, dtype=bool)
    cols[arr.astype(np.int64)] = True
    return cols


def distance(a, b, scale, subset=None, categorical=None) -> float:
    """Standardised distance between two instances over ``subset`` (all by default)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), a.shape)
    cat = np.zeros(a.shape, bool) if categorical is None else np.asarray(categorical, bool)
    delta2 = np.where(cat, (a != b).astype(np.float64), ((a - b) / scale) ** 2)
    return math.sqrt(float(delta2[_subset_columns(subset, a.shape[0])].sum()))


def _exponents(spec: KernelSpec, sq: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """``sum_j delta_j^2 / sigma_j^2`` over the selected columns; rows of ``cols`` broadcast."""
    bw = np.broadcast_to(np.asarray(spec.bandwidth, dtype=np.float64), (sq.shape[1],)) \
        if not spec.diagonal else np.asarray(spec.bandwidth)
    if bw.shape[0] != sq.shape[1]:
        raise StructuralError(f"{bw.shape[0]} bandwidths for {sq.shape[1]} features")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(bw == 0, np.where(sq == 0, 0.0, np.inf), sq / bw ** 2)
    terms = np.where(np.isinf(bw), 0.0, terms)
    cols = np.atleast_2d(cols).T.astype(np.float64)
    blocked = np.isinf(terms)
    # inf * 0 would give nan in the product; route infinities separately
    expo = np.where(blocked, 0.0, terms) @ cols
    if blocked.any():
        expo = np.where((blocked.astype(np.float64) @ cols) > 0, np.inf, expo)
    return expo


def raw_weight_matrix(spec: KernelSpec, x, refs: Dataset, masks, stable=False) -> np.ndarray:
    """Raw kernel weights for each coalition, shape ``(len(masks), L)``.

    In full-vector mode every row is the same. In dropped-only mode the
    distance of coalition ``S`` uses the features outside ``S``.
    """
    sq = squared_deltas(x, refs)
    m = refs.n_features
    if spec.subset_mode is SubsetMode.FULL_VECTOR:
        cols = np.ones((1, m), dtype=bool)
        expo = _exponents(spec, sq, cols)[:, 0]
        w = _exp(expo, stable)[None, :]
        return np.broadcast_to(w, (len(np.atleast_1d(masks)), refs.n_rows))
    cols = ~mask_matrix(masks, m)
    expo = _exponents(spec, sq, cols).T
    return _exp(expo, stable)


def _exp(expo, stable):
    if stable:
        lo = expo.min(axis=-1, keepdims=True)
        lo = np.where(np.isfinite(lo), lo, 0.0)
        return np.exp(-(expo - lo))
    return np.exp(-expo)


def kernel_weights(spec: KernelSpec, x, refs: Dataset, subset=None,
                   stable: bool = False) -> WeightVector:
    """Kernel weights of the references around ``x``.

    ``subset`` selects the features entering the distance; ``None`` uses
    all of them (or, in dropped-only mode, is treated as the empty
    coalition). With ``stable`` the exponent is shifted by its minimum
    before exponentiation, which leaves normalised weights unchanged but
    avoids underflow when the bandwidth is tiny.
    """
    sq = squared_deltas(x, refs)
    if subset is None:
        cols = np.ones(refs.n_features, dtype=bool)
    elif spec.subset_mode is SubsetMode.DROPPED_ONLY and isinstance(subset, Coalition):
        cols = ~subset.indicator()
    else:
        cols = _subset_columns(subset, refs.n_features)
    expo = _exponents(spec, sq, cols[None, :])[:, 0]
    raw = _exp(expo, stable)
    total = raw.sum()
    if not total > 0:
        raise DegenerateNeighbourhood(math.sqrt(float((sq[:, cols]).sum(axis=1).min())))
    return WeightVector(raw, raw / total)


def select_bandwidth(x, refs: Dataset, grid) -> tuple[float, bool]:
    """Smallest grid bandwidth whose nearest quarter of references holds at most 75% of the mass.

    Returns ``(sigma, saturated)``; ``saturated`` is True when no grid value
    qualifies and the largest one is returned.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) < 0):
        raise StructuralError("bandwidth grid must be non-empty and ascending")
    d2 = squared_deltas(x, refs).sum(axis=1)
    order = np.argsort(d2, kind="stable")
    n_near = math.ceil(0.25 * refs.n_rows)
    for sigma in grid:
        w = np.exp(-(d2 - d2.min()) / sigma ** 2)
        if w[order[:n_near]].sum() / w.sum() <= 0.75:
            return float(sigma), False
    return float(grid[-1]), True


def sweep_grid(n_features: int, n_points: int) -> np.ndarray:
    """Geometric grid from ``SIGMA_MIN`` to ``3 * n_features``."""
    if n_points < 2:
        raise StructuralError("sweep grid needs at least two points")
    return np.geomspace(SIGMA_MIN, 3.0 * n_features, n_points)
