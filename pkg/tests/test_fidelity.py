import numpy as np
import pytest

from nbrshap.blackboxes import Builtin
from nbrshap.core import Attribution, Dataset, EvalLedger
from nbrshap.errors import DegenerateNeighbourhood
from nbrshap.estimators import EstimatorConfig, explain_exact
from nbrshap.fidelity import local_fidelity
from nbrshap.kernels import KernelSpec


def test_linear_single_reference_is_exact():
    with pytest.warns(UserWarning, match="zero-variance"):
        ref = Dataset(np.array([[0.5, -1.0, 2.0]]))
    bb = Builtin("linear", beta=(1.0, 2.0, -1.0))
    x = np.array([1.0, 1.0, 1.0])
    attr = explain_exact(bb, EvalLedger(), x, ref, EstimatorConfig())
    rep = local_fidelity(attr, bb, x, ref, np.inf, 500, 0)
    assert rep.weighted_mse < 1e-24
    assert rep.n_samples == 500


def test_constant_model():
    refs = Dataset(np.random.default_rng(0).normal(size=(30, 2)))
    attr = Attribution(np.zeros(2), 2.5)
    rep = local_fidelity(attr, Builtin("constant", c=2.5), [0, 0], refs, 1.0, 100, 1)
    assert rep.weighted_mse == 0


def test_infinite_bandwidth_is_plain_mse():
    refs = Dataset(np.random.default_rng(1).normal(size=(50, 2)))
    bb = Builtin("indicator2d")
    attr = Attribution(np.array([1.0, 2.0]), 0.5)
    a = local_fidelity(attr, bb, [0.1, 2.0], refs, np.inf, 300, 3)
    b = local_fidelity(attr, bb, [0.1, 2.0], refs, 1e12, 300, 3)
    assert a.weighted_mse == pytest.approx(b.weighted_mse, rel=1e-12)


def test_degenerate_eval_kernel():
    refs = Dataset(np.array([[100.0], [101.0]]), center=[0.0], scale=[1.0])
    with pytest.raises(DegenerateNeighbourhood):
        local_fidelity(Attribution(np.zeros(1), 0.0), Builtin("gaussmix_cdf"), [0.0], refs,
                       0.01, 10, 0)


def test_neighbourhood_attribution_is_locally_more_faithful():
    bb = Builtin("indicator2d")
    x = np.array([0.1, 2.0])
    wins = []
    for seed in range(20):
        refs = Dataset(np.random.default_rng(seed).standard_normal((500, 2)))
        uni = explain_exact(bb, EvalLedger(), x, refs, EstimatorConfig())
        nbr = explain_exact(bb, EvalLedger(), x, refs,
                            EstimatorConfig(weighting="neighbourhood", kernel=KernelSpec(0.5)))
        mu = local_fidelity(uni, bb, x, refs, 0.5, 2000, seed).weighted_mse
        mn = local_fidelity(nbr, bb, x, refs, 0.5, 2000, seed).weighted_mse
        wins.append(mn - mu)
    assert np.median(wins) < 0
