import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from scipy.stats import chisquare

from nbrshap.coalitions import (
    MAX_EXACT_FEATURES,
    draw_excluding,
    draw_shapley_coalitions,
    enumerate_coalitions,
    kernelshap_weight,
    sample_coalitions,
    shapley_subset_weight,
    size_distribution,
)
from nbrshap.core import popcount
from nbrshap.errors import AnchorsAreConstraints, ExactModeUnavailable
from nbrshap.rng import generator


def test_enumeration():
    assert [c.members for c in enumerate_coalitions(2)] == [(), (0,), (1,), (0, 1)]
    assert len(enumerate_coalitions(5)) == 32
    assert [c.mask for c in enumerate_coalitions(4)] == [c.mask for c in enumerate_coalitions(4)]
    with pytest.raises(ExactModeUnavailable):
        enumerate_coalitions(MAX_EXACT_FEATURES + 1)


def test_shapley_weight_examples():
    assert shapley_subset_weight(3, 0) == pytest.approx(1 / 3)
    assert shapley_subset_weight(3, 1) == pytest.approx(1 / 6)
    assert shapley_subset_weight(3, 2) == pytest.approx(1 / 3)
    assert shapley_subset_weight(1, 0) == 1


@pytest.mark.parametrize("M", range(1, 11))
def test_shapley_weights_sum_to_one(M):
    total = sum(shapley_subset_weight(M, len(S))
                for k in range(M) for S in itertools.combinations(range(M - 1), k))
    assert total == pytest.approx(1, abs=1e-12)
    per_size = [comb(M - 1, k) * shapley_subset_weight(M, k) for k in range(M)]
    assert np.allclose(per_size, 1 / M)


def test_kernelshap_weight():
    assert kernelshap_weight(3, 1) == pytest.approx(1 / 3)
    assert kernelshap_weight(2, 1) == pytest.approx(1 / 2)
    for k in range(1, 9):
        assert kernelshap_weight(9, k) == kernelshap_weight(9, 9 - k)
    for bad in (0, 4):
        with pytest.raises(AnchorsAreConstraints):
            kernelshap_weight(4, bad)


def test_exhaustive_sample():
    s = sample_coalitions(4, 14, generator(0))
    assert s.exhaustive
    assert s.masks.tolist() == list(range(1, 15))
    assert np.allclose(s.reg_weight, [kernelshap_weight(4, int(k)) for k in popcount(s.masks)])


def test_sample_is_deterministic_and_excludes_anchors():
    a = sample_coalitions(10, 300, generator(7, 1))
    b = sample_coalitions(10, 300, generator(7, 1))
    assert np.array_equal(a.masks, b.masks) and np.array_equal(a.counts, b.counts)
    assert 0 not in a.masks and (1 << 10) - 1 not in a.masks
    assert a.counts.sum() == 300
    assert a.reg_weight.sum() == pytest.approx(1)


def test_size_distribution_exact():
    p = size_distribution(4)
    raw = [Fraction(3, k * (4 - k)) for k in (1, 2, 3)]
    assert np.allclose(p, [float(r / sum(raw)) for r in raw])


def test_size_histogram_chi_square():
    M, C = 10, 1000
    expected = size_distribution(M)
    failures = 0
    for seed in range(20):
        s = sample_coalitions(M, C, generator(seed))
        # complements are paired, so only the first half of each pair is independent;
        # fold sizes k and M-k together and count each pair once
        sizes = np.repeat(popcount(s.masks), s.counts)
        folded = np.minimum(sizes, M - sizes)
        obs = np.bincount(folded, minlength=M // 2 + 1)[1:] / 2
        exp = np.array([expected[k - 1] + (expected[M - k - 1] if k != M - k else 0)
                        for k in range(1, M // 2 + 1)]) * obs.sum()
        if chisquare(obs, exp).pvalue < 0.01:
            failures += 1
    assert failures <= 2


def test_shapley_law_draws():
    gen = generator(3)
    masks = draw_shapley_coalitions(4, 40000, gen)
    sizes = popcount(masks)
    assert np.allclose(np.bincount(sizes, minlength=5)[:4] / 40000, 0.25, atol=0.01)
    assert sizes.max() <= 3
    ex = draw_excluding(4, 2, 1000, gen)
    assert np.all((ex >> 2) & 1 == 0)
