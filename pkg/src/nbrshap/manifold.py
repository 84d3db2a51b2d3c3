"""On-manifold audit of the points an estimator sends to the model.

A k-nearest-neighbour distance to the background data stands in for a
trained out-of-distribution classifier: AUC near 0.5 means concatenated
points are indistinguishable from real ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import rng as rngs
from .coalitions import draw_shapley_coalitions
from .core import Coalition, Dataset, mask_matrix
from .errors import StructuralError
from .estimators import EstimatorConfig, Weighting
from .kernels import SubsetMode, raw_weight_matrix

DEFAULT_K = 5


@dataclass
class AuditReport:
    concatenated: np.ndarray
    ood_scores_real: np.ndarray
    ood_scores_concat: np.ndarray
    auc: float
    mean_manifold_distance: float
    n: int
    k: int
    seed: int
    bandwidth: str | None


def _sampling_weights(cfg, x, refs, masks):
    if cfg.weighting is Weighting.UNIFORM:
        return np.ones((len(masks), refs.n_rows))
    if cfg.weighting is Weighting.ANTI:
        raise StructuralError("anti-neighbourhood weights are not a sampling distribution")
    return raw_weight_matrix(cfg.kernel, x, refs, masks, stable=True)


def generate_concatenations(instances, refs: Dataset, cfg: EstimatorConfig, n: int, seed: int,
                            coalition: Coalition | None = None) -> np.ndarray:
    """``n`` rows ``(x_S, ref_~S)`` as an estimator under ``cfg`` would produce them.

    Row ``r`` explains instance ``r mod len(instances)``. ``S`` follows the
    Shapley coalition law unless ``coalition`` pins it, and the reference is
    drawn in proportion to the configured reference weights. Draws use the
    inverse CDF of the raw weights so that a flat kernel reproduces uniform
    sampling exactly.
    """
    if n < 1:
        raise StructuralError("n must be >= 1")
    X = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    M = refs.n_features
    if X.shape[1] != M:
        raise StructuralError("instance width does not match reference schema")
    gen = rngs.generator(seed, rngs.MANIFOLD)
    which = np.arange(n) % X.shape[0]
    if coalition is None:
        masks = draw_shapley_coalitions(M, n, gen)
    else:
        masks = np.full(n, coalition.mask, dtype=np.int64)
    u = gen.random(n)

    ref_idx = np.empty(n, dtype=np.int64)
    per_mask = cfg.weighting is not Weighting.UNIFORM and \
        cfg.kernel.subset_mode is SubsetMode.DROPPED_ONLY
    for i in np.unique(which):
        rows = np.flatnonzero(which == i)
        groups = [(masks[rows[0]], rows)] if not per_mask else \
            [(m, rows[masks[rows] == m]) for m in np.unique(masks[rows])]
        for m, sel in groups:
            w = _sampling_weights(cfg, X[i], refs, [m])[0]
            cdf = np.cumsum(w)
            ref_idx[sel] = np.minimum(np.searchsorted(cdf, u[sel] * cdf[-1], side="right"),
                                      refs.n_rows - 1)
    member = mask_matrix(masks, M)
    return np.where(member, X[which], refs.rows[ref_idx])


def ood_knn_score(background: Dataset, points, k: int = DEFAULT_K) -> np.ndarray:
    """Standardised distance from each point to its ``k``-th nearest background row."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not 1 <= k <= background.n_rows:
        raise StructuralError(f"k={k} must lie in 1..{background.n_rows}")
    B = background.rows / background.scale
    cat = background.categorical
    out = np.empty(P.shape[0])
    step = max(1, 2_000_000 // max(1, B.size))
    for s in range(0, P.shape[0], step):
        chunk = P[s:s + step]
        diff = chunk[:, None, :] / background.scale - B[None, :, :]
        sq = np.where(cat, (diff != 0).astype(np.float64), diff ** 2).sum(axis=2)
        out[s:s + step] = np.sqrt(np.partition(sq, k - 1, axis=1)[:, k - 1])
    return out


def auc(real_scores, concat_scores) -> float:
    """Probability that a concatenated point scores higher than a real one (ties count half)."""
    real = np.asarray(real_scores, dtype=np.float64)
    concat = np.asarray(concat_scores, dtype=np.float64)
    ranks = rankdata(np.concatenate([real, concat]))
    n_c = concat.shape[0]
    u = ranks[real.shape[0]:].sum() - n_c * (n_c + 1) / 2.0
    return float(u / (n_c * real.shape[0]))


def audit(instances, refs: Dataset, cfg: EstimatorConfig, n: int | None = None,
          k: int = DEFAULT_K, seed: int = 0, coalition: Coalition | None = None) -> AuditReport:
    """Separability of real held-out rows from the concatenations built for them."""
    real = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    n = real.shape[0] if n is None else n
    concat = generate_concatenations(real, refs, cfg, n, seed, coalition)
    s_real = ood_knn_score(refs, real, k)
    s_concat = ood_knn_score(refs, concat, k)
    nearest = ood_knn_score(refs, concat, 1)
    bandwidth = None if cfg.weighting is Weighting.UNIFORM else cfg.kernel.label()
    return AuditReport(concat, s_real, s_concat, auc(s_real, s_concat), float(nearest.mean()),
                       n, k, seed, bandwidth)
