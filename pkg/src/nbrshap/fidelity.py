"""Local fidelity of an additive explanation around the explained instance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .coalitions import draw_shapley_coalitions
from .core import Attribution, Dataset, as_instance, mask_matrix
from .errors import DegenerateNeighbourhood, StructuralError
from .kernels import squared_deltas


@dataclass
class FidelityReport:
    weighted_mse: float
    n_samples: int
    eval_sigma: float
    config: dict = field(default_factory=dict)


def local_fidelity(attr: Attribution, bb, x, refs: Dataset, eval_sigma: float, n: int,
                   seed: int) -> FidelityReport:
    """Kernel-weighted squared error of ``g(S) = phi0 + sum_{j in S} phi_j``.

    Each of the ``n`` samples pairs a Shapley-law coalition with one
    reference drawn uniformly from ``refs``; the model is evaluated at the
    concatenation and the sample is weighted by
    ``exp(-D(x, ref)**2 / eval_sigma**2)``. An infinite ``eval_sigma``
    gives the plain mean squared error.
    """
    if n < 1:
        raise StructuralError("n must be >= 1")
    x = as_instance(x, refs.n_features)
    M = refs.n_features
    gen = rngs.generator(seed, rngs.FIDELITY)
    masks = draw_shapley_coalitions(M, n, gen)
    idx = gen.integers(0, refs.n_rows, size=n)
    member = mask_matrix(masks, M)
    Z = np.where(member, x, refs.rows[idx])
    y = np.asarray(bb(Z), dtype=np.float64)
    g = attr.phi0 + member.astype(np.float64) @ attr.phi
    d2 = squared_deltas(x, refs).sum(axis=1)[idx]
    u = np.exp(-d2 / eval_sigma ** 2)
    if not u.sum() > 0:
        raise DegenerateNeighbourhood(math.sqrt(float(d2.min())))
    mse = float(u @ (g - y) ** 2 / u.sum())
    return FidelityReport(mse, n, float(eval_sigma), dict(attr.meta))
