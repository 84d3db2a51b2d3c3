"""Coalition enumeration, Shapley weights and KernelSHAP coalition sampling."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .core import Coalition, popcount
from .errors import AnchorsAreConstraints, ExactModeUnavailable, StructuralError

MAX_EXACT_FEATURES = 20
MAX_FEATURES = 62


def enumerate_coalitions(n_features: int) -> list[Coalition]:
    """All ``2**M`` coalitions in ascending mask order."""
    return [Coalition(m, n_features) for m in enumerate_masks(n_features)]


def enumerate_masks(n_features: int) -> np.ndarray:
    if n_features > MAX_EXACT_FEATURES:
        raise ExactModeUnavailable(
            f"exact enumeration is limited to {MAX_EXACT_FEATURES} features, got {n_features}"
        )
    return np.arange(1 << n_features, dtype=np.int64)


def shapley_subset_weight(n_features: int, size: int) -> float:
    """Probability of a particular ``S`` of ``size`` not containing the attributed feature.

    ``|S|! (M - |S| - 1)! / M!``; summed over all subsets of the other
    ``M - 1`` features this is 1, with equal mass on every size.
    """
    if isinstance(size, Coalition):
        size = size.size
    if not 0 <= size <= n_features - 1:
        raise StructuralError(f"coalition size {size} invalid for {n_features} features")
    return factorial(size) * factorial(n_features - size - 1) / factorial(n_features)


def kernelshap_weight(n_features: int, size: int) -> float:
    """Shapley kernel ``(M - 1) / (C(M, k) k (M - k))``."""
    if size <= 0 or size >= n_features:
        raise AnchorsAreConstraints(
            f"size {size} is an anchor coalition for {n_features} features; it has infinite weight"
        )
    return (n_features - 1) / (comb(n_features, size) * size * (n_features - size))


@dataclass(frozen=True)
class CoalitionSample:
    """Distinct proper coalitions with their regression weights.

    ``counts`` holds the number of draws that produced each coalition (all
    ones for a complete enumeration). The anchors are never rows here.
    """

    masks: np.ndarray
    reg_weight: np.ndarray
    counts: np.ndarray
    n_features: int
    exhaustive: bool

    def __len__(self):
        return len(self.masks)

    @property
    def coalitions(self) -> list[Coalition]:
        return [Coalition(int(m), self.n_features) for m in self.masks]


def size_distribution(n_features: int) -> np.ndarray:
    """Probability of each coalition size 1..M-1 under the Shapley kernel."""
    k = np.arange(1, n_features)
    p = (n_features - 1) / (k * (n_features - k))
    return p / p.sum()


def _random_subsets(rng, n_features, sizes):
    # ranks of uniform keys give a uniformly random subset of each size
    keys = rng.random((len(sizes), n_features))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    member = ranks < np.asarray(sizes)[:, None]
    return member.astype(np.int64) @ (np.int64(1) << np.arange(n_features, dtype=np.int64))


def sample_coalitions(n_features: int, n_coalitions: int, rng) -> CoalitionSample:
    """Draw ``n_coalitions`` proper coalitions from the Shapley kernel.

    Draws come in complementary pairs. Sizes follow the kernel's size
    distribution and members are uniform within a size. Repeated coalitions
    are merged and their multiplicity becomes the regression weight. When
    the budget covers all ``2**M - 2`` proper coalitions they are
    enumerated with exact kernel weights instead.
    """
    if n_coalitions < 2:
        raise StructuralError("need at least two coalitions")
    if n_features < 2:
        raise StructuralError("coalition sampling needs at least two features")
    if n_features > MAX_FEATURES:
        raise StructuralError(f"at most {MAX_FEATURES} features are supported")
    n_proper = (1 << n_features) - 2
    if n_coalitions >= n_proper:
        masks = np.arange(1, n_proper + 1, dtype=np.int64)
        sizes = popcount(masks)
        w = np.array([kernelshap_weight(n_features, int(k)) for k in sizes])
        return CoalitionSample(masks, w, np.ones(len(masks), dtype=np.int64), n_features, True)

    n_pairs = (n_coalitions + 1) // 2
    sizes = rng.choice(np.arange(1, n_features), size=n_pairs, p=size_distribution(n_features))
    first = _random_subsets(rng, n_features, sizes)
    full = (1 << n_features) - 1
    drawn = np.empty(2 * n_pairs, dtype=np.int64)
    drawn[0::2] = first
    drawn[1::2] = full ^ first
    drawn = drawn[:n_coalitions]
    masks, counts = np.unique(drawn, return_counts=True)
    return CoalitionSample(masks, counts / counts.sum(), counts, n_features, False)


def draw_shapley_coalitions(n_features: int, n: int, rng) -> np.ndarray:
    """Masks drawn as the coalition ``S`` of a Shapley marginal contribution.

    The size is uniform on ``0..M-1`` and the members uniform within the
    size; this is the law of ``S`` when the attributed feature is itself
    uniform.
    """
    sizes = rng.integers(0, n_features, size=n)
    return _random_subsets(rng, n_features, sizes)


def draw_excluding(n_features: int, feature: int, n: int, rng) -> np.ndarray:
    """Masks ``S`` drawn from the Shapley distribution over subsets without ``feature``."""
    others = [j for j in range(n_features) if j != feature]
    if not others:
        return np.zeros(n, dtype=np.int64)
    sizes = rng.integers(0, n_features, size=n)
    sub = _random_subsets(rng, n_features - 1, sizes)
    out = np.zeros(n, dtype=np.int64)
    for pos, j in enumerate(others):
        out |= ((sub >> pos) & 1) << j
    return out
