"""Shapley attribution estimators with uniform, neighbourhood and anti-neighbourhood references.

All estimators share one pipeline: choose the coalitions to evaluate, fetch
the masked model outputs ``Y[c, l] = f(x_S_c, ref_l)`` through the ledger,
weight the references, and turn the resulting coalition values into
attributions. Reference weights enter only at the last two steps, so a
bandwidth sweep evaluates the model once and re-weights the same ``Y``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import rng as rngs
from .coalitions import (
    CoalitionSample,
    draw_excluding,
    enumerate_masks,
    sample_coalitions,
    shapley_subset_weight,
)
from .core import Attribution, Dataset, EvalLedger, as_instance, mask_matrix, popcount
from .errors import DegenerateNeighbourhood, StructuralError, VarianceUnavailable
from .kernels import KernelSpec, SubsetMode, WeightVector, kernel_weights, raw_weight_matrix


class Mode(str, enum.Enum):
    EXACT = "exact"
    FORMULA_MC = "formula_mc"
    KERNELSHAP = "kernelshap"


class Weighting(str, enum.Enum):
    UNIFORM = "uniform"
    NEIGHBOURHOOD = "neighbourhood"
    ANTI = "anti"


@dataclass(frozen=True)
class EstimatorConfig:
    mode: Mode = Mode.EXACT
    weighting: Weighting = Weighting.UNIFORM
    kernel: KernelSpec | None = None
    n_coalitions: int = 2048
    n_references: int | None = None
    seed: int = 0
    compute_variance: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "weighting", Weighting(self.weighting))
        if self.weighting is not Weighting.UNIFORM and self.kernel is None:
            raise StructuralError(f"{self.weighting.value} weighting needs a kernel")
        if self.mode is not Mode.EXACT and self.n_coalitions < 2:
            raise StructuralError("need at least two coalitions")

    def with_kernel(self, kernel: KernelSpec) -> "EstimatorConfig":
        return replace(self, kernel=kernel)


# ---------------------------------------------------------------------------
# reference weights


def reference_weights(cfg: EstimatorConfig, x, refs: Dataset, subset=None) -> WeightVector:
    """Coefficients applied to the masked outputs of one coalition.

    Uniform and neighbourhood coefficients sum to one. Anti-neighbourhood
    coefficients are ``(1 - d_l / mean(d)) / L`` and sum to zero: the
    resulting value function is the uniform one minus the neighbourhood one.
    """
    L = refs.n_rows
    if cfg.weighting is Weighting.UNIFORM:
        raw = np.ones(L)
        return WeightVector(raw, raw / L)
    kw = kernel_weights(cfg.kernel, x, refs, subset, stable=True)
    if cfg.weighting is Weighting.NEIGHBOURHOOD:
        return kw
    return WeightVector(kw.raw, (1.0 - kw.raw / kw.raw.mean()) / L)


def _coefficients(cfg: EstimatorConfig, x, refs: Dataset, masks) -> np.ndarray:
    """Per-coalition reference coefficients, ``(len(masks), L)`` or ``(1, L)`` if shared."""
    L = refs.n_rows
    if cfg.weighting is Weighting.UNIFORM:
        return np.full((1, L), 1.0 / L)
    # shifted exponents: same normalised and anti coefficients, no underflow at small bandwidths
    if cfg.kernel.subset_mode is SubsetMode.FULL_VECTOR:
        raw = raw_weight_matrix(cfg.kernel, x, refs, [0], stable=True)[:1]
    else:
        raw = raw_weight_matrix(cfg.kernel, x, refs, masks, stable=True)
    total = raw.sum(axis=1, keepdims=True)
    if np.any(~(total > 0)):
        d2 = ((refs.rows - x) / refs.scale) ** 2
        raise DegenerateNeighbourhood(math.sqrt(float(d2.sum(axis=1).min())))
    if cfg.weighting is Weighting.NEIGHBOURHOOD:
        return raw / total
    return (1.0 - raw / (total / L)) / L


def _values(Y: np.ndarray, W: np.ndarray) -> np.ndarray:
    if W.shape[0] == 1:
        return Y @ W[0]
    return np.einsum("cl,cl->c", Y, W)


def value_function(bb, ledger: EvalLedger, x, refs: Dataset, s, w: WeightVector,
                   workers: int = 1) -> float:
    """Weighted mean of the masked outputs of coalition ``s``.

    With kernel weights this is at once the self-normalised importance
    sampling estimate under the neighbourhood distribution and the
    Nadaraya-Watson regression estimate at ``x``.
    """
    y = ledger.evaluate(bb, x, refs, [s.mask], workers)[0]
    return float(y @ w.normalised)


# ---------------------------------------------------------------------------
# coalition plans


@dataclass
class _Plan:
    n_features: int
    masks: np.ndarray                       # distinct masks to evaluate, anchors included
    sample: CoalitionSample | None = None   # kernelshap
    draws: list = field(default_factory=list)  # formula_mc, per feature
    exhaustive: bool = False

    @property
    def full(self) -> int:
        return (1 << self.n_features) - 1


def _plan(cfg: EstimatorConfig, n_features: int) -> _Plan:
    full = (1 << n_features) - 1
    if cfg.mode is Mode.EXACT:
        return _Plan(n_features, enumerate_masks(n_features), exhaustive=True)
    gen = rngs.generator(cfg.seed, rngs.COALITIONS)
    if cfg.mode is Mode.KERNELSHAP:
        if n_features == 1:
            return _Plan(n_features, np.array([0, 1]), exhaustive=True)
        sample = sample_coalitions(n_features, cfg.n_coalitions, gen)
        masks = np.concatenate([[0], sample.masks, [full]]).astype(np.int64)
        return _Plan(n_features, masks, sample=sample, exhaustive=sample.exhaustive)
    per_feature = max(1, cfg.n_coalitions // n_features)
    draws = [draw_excluding(n_features, j, per_feature, gen) for j in range(n_features)]
    masks = np.unique(np.concatenate(
        [[0, full]] + [np.concatenate([d, d | (1 << j)]) for j, d in enumerate(draws)]
    )).astype(np.int64)
    return _Plan(n_features, masks, draws=draws)


def _shapley_from_values(V: np.ndarray, n_features: int) -> np.ndarray:
    masks = np.arange(1 << n_features, dtype=np.int64)
    sizes = popcount(masks)
    sw = np.array([shapley_subset_weight(n_features, k) for k in range(n_features)])
    phi = np.empty(n_features)
    for j in range(n_features):
        S = masks[(masks >> j & 1) == 0]
        phi[j] = np.sum(sw[sizes[S]] * (V[S | (1 << j)] - V[S]))
    return phi


def _constrained_wls(Z, y, weight, v_empty, v_full):
    """Weighted least squares for ``g(S) = phi0 + sum phi_j z_j`` pinned at both anchors.

    The anchors fix ``phi0 = v_empty`` and ``sum phi = v_full - v_empty``;
    eliminating the last coefficient leaves an ``(M-1)``-dimensional
    normal system solved by Cholesky, with a pseudo-inverse fallback.
    """
    M = Z.shape[1]
    delta = v_full - v_empty
    if M == 1:
        return np.array([delta]), False
    Z = Z.astype(np.float64)
    t = y - v_empty - Z[:, -1] * delta
    X = Z[:, :-1] - Z[:, -1:]
    A = X.T @ (weight[:, None] * X)
    b = X.T @ (weight * t)
    singular = not np.linalg.cond(A) < 1e12
    if not singular:
        try:
            beta = linalg.cho_solve(linalg.cho_factor(A), b)
        except linalg.LinAlgError:
            singular = True
    if singular:
        warnings.warn("singular KernelSHAP normal equations; using pseudo-inverse", stacklevel=3)
        beta = np.linalg.pinv(A) @ b
    return np.append(beta, delta - beta.sum()), singular


def variance_formula(outputs: np.ndarray, weights: np.ndarray, n_features: int) -> np.ndarray:
    """Per-feature variance of the enumerated Shapley estimate.

    ``outputs`` holds masked outputs for all ``2**M`` coalitions in mask
    order; ``weights`` the normalised reference weights per coalition (or a
    single shared row). Each coalition value is a weighted mean whose
    variance is estimated as ``sum_l w_l**2 (y_l - ybar_w)**2``; for uniform
    weights this is the population variance over ``L``. Coalition values
    are independent given the references, so the feature variance is
    ``sum_S p(S)**2 (var[S u j] + var[S])``.
    """
    if outputs.shape[0] != 1 << n_features:
        raise VarianceUnavailable("variance formula needs every coalition evaluated")
    if outputs.shape[1] < 2:
        raise VarianceUnavailable("variance needs at least two references")
    if np.any(weights < 0) or not np.allclose(weights.sum(axis=1), 1.0):
        raise VarianceUnavailable("variance formula needs non-negative normalised weights")
    means = _values(outputs, weights)
    W = np.broadcast_to(weights, outputs.shape)
    var_mean = np.einsum("cl,cl->c", W ** 2, (outputs - means[:, None]) ** 2)
    masks = np.arange(1 << n_features, dtype=np.int64)
    sizes = popcount(masks)
    sw2 = np.array([shapley_subset_weight(n_features, k) ** 2 for k in range(n_features)])
    out = np.empty(n_features)
    for j in range(n_features):
        S = masks[(masks >> j & 1) == 0]
        out[j] = np.sum(sw2[sizes[S]] * (var_mean[S | (1 << j)] + var_mean[S]))
    return out


def _attribute(cfg: EstimatorConfig, plan: _Plan, Y: np.ndarray, W: np.ndarray) -> Attribution:
    M = plan.n_features
    V = _values(Y, W)
    pos = {int(m): i for i, m in enumerate(plan.masks)}
    v_empty, v_full = V[pos[0]], V[pos[plan.full]]
    meta = {"singular": False}
    variance = None

    if cfg.mode is Mode.EXACT:
        phi = _shapley_from_values(V, M)
    elif cfg.mode is Mode.KERNELSHAP:
        if plan.sample is None:
            phi = np.array([v_full - v_empty])
        else:
            rows = np.array([pos[int(m)] for m in plan.sample.masks])
            Z = mask_matrix(plan.sample.masks, M)
            phi, meta["singular"] = _constrained_wls(Z, V[rows], plan.sample.reg_weight,
                                                     v_empty, v_full)
    else:
        phi = np.empty(M)
        spread = np.empty(M)
        for j, S in enumerate(plan.draws):
            diffs = V[[pos[int(m) | (1 << j)] for m in S]] - V[[pos[int(m)] for m in S]]
            phi[j] = diffs.mean()
            spread[j] = diffs.var(ddof=1) / len(diffs) if len(diffs) > 1 else np.nan
        if cfg.compute_variance:
            if np.any(np.isnan(spread)):
                raise VarianceUnavailable("formula Monte Carlo variance needs two draws per feature")
            variance = spread

    if cfg.compute_variance and cfg.mode is not Mode.FORMULA_MC:
        if cfg.weighting is Weighting.ANTI:
            raise VarianceUnavailable("no variance estimator for anti-neighbourhood weights")
        if not plan.exhaustive:
            raise VarianceUnavailable("variance formula needs exhaustive coalitions")
        variance = variance_formula(Y, W, M)

    meta.update({
        "estimator": cfg.mode.value,
        "weighting": cfg.weighting.value,
        "bandwidth": cfg.kernel.label() if cfg.kernel is not None and
        cfg.weighting is not Weighting.UNIFORM else None,
        "seed": cfg.seed,
        "L": Y.shape[1],
        "C": len(plan.masks),
        "v_full": float(v_full),
    })
    return Attribution(phi=phi, phi0=float(v_empty), variance=variance, meta=meta)


def _reference_sample(cfg: EstimatorConfig, refs: Dataset) -> Dataset:
    n = cfg.n_references
    if n is None or n >= refs.n_rows:
        return refs
    gen = rngs.generator(cfg.seed, rngs.REFERENCES)
    idx = np.sort(gen.choice(refs.n_rows, size=n, replace=False))
    return refs.subset(idx)


def explain_sweep(bb, ledger: EvalLedger, x, refs: Dataset, cfg: EstimatorConfig,
                  kernels) -> list[Attribution]:
    """Attributions for each kernel in ``kernels``, sharing one set of model evaluations.

    ``None`` in ``kernels`` stands for uniform weighting.
    """
    x = as_instance(x, refs.n_features)
    refs = _reference_sample(cfg, refs)
    plan = _plan(cfg, refs.n_features)
    before = ledger.counter
    Y = ledger.evaluate(bb, x, refs, plan.masks, cfg.workers)
    evals = ledger.counter - before
    out = []
    for kernel in kernels:
        c = replace(cfg, weighting=Weighting.UNIFORM) if kernel is None else \
            replace(cfg, kernel=kernel)
        W = _coefficients(c, x, refs, plan.masks)
        attr = _attribute(c, plan, Y, W)
        attr.meta["eval_count"] = evals
        out.append(attr)
    return out


def explain(bb, ledger: EvalLedger, x, refs: Dataset, cfg: EstimatorConfig) -> Attribution:
    return explain_sweep(bb, ledger, x, refs, cfg, [cfg.kernel])[0]


def explain_exact(bb, ledger: EvalLedger, x, refs: Dataset, cfg: EstimatorConfig) -> Attribution:
    """Shapley values by enumerating every coalition against every reference."""
    return explain(bb, ledger, x, refs, replace(cfg, mode=Mode.EXACT))


def explain_kernelshap(bb, ledger: EvalLedger, x, refs: Dataset,
                       cfg: EstimatorConfig) -> Attribution:
    """Shapley values from the anchor-constrained KernelSHAP regression."""
    return explain(bb, ledger, x, refs, replace(cfg, mode=Mode.KERNELSHAP))


def normalise(attr: Attribution, how: str) -> Attribution:
    """Rescale attributions to a relative measure: ``by_std`` or ``by_abs_sum``."""
    if how in (None, "none"):
        return attr
    if how == "by_std":
        scale = attr.phi.std()
    elif how == "by_abs_sum":
        scale = np.abs(attr.phi).sum()
    else:
        raise StructuralError(f"unknown normalisation {how!r}")
    if scale == 0:
        scale = 1.0
    variance = None if attr.variance is None else attr.variance / scale ** 2
    meta = dict(attr.meta, normalisation=how, normalisation_scale=float(scale))
    return Attribution(attr.phi / scale, attr.phi0 / scale, variance, meta)
