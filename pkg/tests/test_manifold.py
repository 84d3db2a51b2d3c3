import numpy as np
import pytest

from nbrshap.core import Coalition, Dataset
from nbrshap.datasets import ring
from nbrshap.errors import StructuralError
from nbrshap.estimators import EstimatorConfig
from nbrshap.kernels import KernelSpec
from nbrshap.manifold import audit, auc, generate_concatenations, ood_knn_score


def test_auc_identical_and_ordered():
    s = np.random.default_rng(0).normal(size=50)
    assert auc(s, s) == 0.5
    assert auc([0, 1, 2], [10, 11]) == 1.0
    assert auc([10, 11], [0, 1, 2]) == 0.0


def test_auc_monotone_invariance():
    g = np.random.default_rng(1)
    a, b = g.normal(size=40), g.normal(0.5, size=30)
    assert auc(a, b) == auc(np.exp(a), np.exp(b))
    assert 0 <= auc(a, b) <= 1


def test_knn_score_examples():
    bg = Dataset(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), center=np.zeros(2),
                 scale=np.ones(2))
    assert ood_knn_score(bg, [[1.0, 0.0]], 1)[0] == 0
    assert ood_knn_score(bg, [[5.0, 0.0]], 1)[0] == pytest.approx(4.0)
    rows = np.random.default_rng(2).normal(size=(30, 2))
    pts = np.random.default_rng(3).normal(size=(5, 2))
    a = ood_knn_score(Dataset(rows, scale=[1.3, 0.7]), pts, 3)
    b = ood_knn_score(Dataset(rows[::-1], scale=[1.3, 0.7]), pts, 3)
    assert np.array_equal(a, b)
    with pytest.raises(StructuralError):
        ood_knn_score(bg, [[0.0, 0.0]], 4)


def test_concatenations_degenerate_cases():
    refs = Dataset(np.vstack([[0.3, 0.3], np.random.default_rng(0).normal(size=(20, 2)) + 5]))
    x = np.array([0.3, 0.3])
    cfg = EstimatorConfig(weighting="neighbourhood", kernel=KernelSpec(1e-3))
    rows = generate_concatenations(x, refs, cfg, 50, 0)
    assert np.all(rows == x)
    rows = generate_concatenations(x, refs, EstimatorConfig(), 50, 0, Coalition.full(2))
    assert np.all(rows == x)


def test_flat_kernel_reproduces_uniform_rows():
    refs = ring(300, seed=1)
    x = refs.rows[:7]
    flat = EstimatorConfig(weighting="neighbourhood", kernel=KernelSpec(1e6))
    a = generate_concatenations(x, refs, flat, 200, 3)
    b = generate_concatenations(x, refs, EstimatorConfig(), 200, 3)
    assert np.array_equal(a, b)


def test_anti_weights_rejected():
    refs = ring(50)
    with pytest.raises(StructuralError):
        generate_concatenations(refs.rows[:2], refs,
                                EstimatorConfig(weighting="anti", kernel=KernelSpec(1.0)), 5, 0)


def test_audit_report_and_determinism():
    data = ring(600, seed=4)
    real, bg = data.rows[:100], data.subset(np.arange(100, 600))
    cfg = EstimatorConfig(weighting="neighbourhood", kernel=KernelSpec(0.1))
    r1 = audit(real, bg, cfg, seed=2)
    r2 = audit(real, bg, cfg, seed=2)
    assert np.array_equal(r1.concatenated, r2.concatenated) and r1.auc == r2.auc
    assert (r1.n, r1.k, r1.seed) == (100, 5, 2)
    assert 0 <= r1.auc <= 1
    assert r1.bandwidth == "0.10000000000000001"


def test_ring_local_sampling_stays_closer():
    gaps = []
    for seed in range(10):
        data = ring(800, seed=seed)
        real, bg = data.rows[:200], data.subset(np.arange(200, 800))
        near = generate_concatenations(real, bg, EstimatorConfig(
            weighting="neighbourhood", kernel=KernelSpec(0.1)), 200, seed)
        far = generate_concatenations(real, bg, EstimatorConfig(), 200, seed)
        gaps.append(np.abs(np.linalg.norm(far, axis=1) - 1).mean()
                    - np.abs(np.linalg.norm(near, axis=1) - 1).mean())
    assert min(gaps) > 0
