"""Smoothed attributions: kernel averages of attributions at nearby points.

Asymptotics, for reference only (not computed here): with diagonal
bandwidth matrix ``H`` the smoothed estimate has bias
``0.5 * mu2(d) * tr(H Hess_phi(x)) + o(tr H)`` and variance
``||d||_2^2 var(phi_hat) / (N |H| p(phi_hat))``; both need the Hessian
of the attribution surface and the density of the raw estimates, which
are unknown in practice.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngs
from .core import Attribution, Dataset, EvalLedger, as_instance
from .errors import StructuralError, VarianceUnavailable
from .estimators import EstimatorConfig, explain
from .kernels import KernelSpec, kernel_weights


@dataclass
class AttributionField:
    """Attributions at ``points`` computed under one estimator configuration.

    ``points`` carries the reference data's standardisation so smoothing
    distances match the ones used for reference weighting.
    """

    points: Dataset
    phi: np.ndarray
    phi0: np.ndarray
    variance: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.points.n_rows

    @classmethod
    def from_attributions(cls, points: Dataset, attributions, meta=None) -> "AttributionField":
        attributions = list(attributions)
        if len(attributions) != points.n_rows:
            raise StructuralError("one attribution per field point is required")
        variance = None
        if all(a.variance is not None for a in attributions):
            variance = np.stack([a.variance for a in attributions])
        return cls(points, np.stack([a.phi for a in attributions]),
                   np.array([a.phi0 for a in attributions]), variance, dict(meta or {}))


def build_field(bb, ledger: EvalLedger, points, refs: Dataset, cfg: EstimatorConfig,
                refs_per_point: int | None = None, workers: int = 1) -> AttributionField:
    """Explain every point in ``points`` against ``refs``.

    With ``refs_per_point`` each point gets its own subsample of that many
    references, drawn from a stream keyed by the seed and the point index,
    so the per-point estimation errors are independent.
    """
    pts = refs.like(points.rows if isinstance(points, Dataset) else points)
    point_cfg = replace(cfg, workers=1)

    def run(i):
        r = refs
        if refs_per_point is not None and refs_per_point < refs.n_rows:
            gen = rngs.generator(cfg.seed, rngs.FIELD, i)
            r = refs.subset(np.sort(gen.choice(refs.n_rows, refs_per_point, replace=False)))
        return explain(bb, ledger, pts.rows[i], r, point_cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            attrs = list(pool.map(run, range(pts.n_rows)))
    else:
        attrs = [run(i) for i in range(pts.n_rows)]
    meta = {"estimator": cfg.mode.value, "weighting": cfg.weighting.value, "seed": cfg.seed,
            "refs_per_point": refs_per_point}
    return AttributionField.from_attributions(pts, attrs, meta)


def _weights(field: AttributionField, x, spec: KernelSpec) -> np.ndarray:
    # shifted exponent: identical normalised weights, no underflow at tiny bandwidths
    return kernel_weights(spec, x, field.points, stable=True).normalised


def smooth(field: AttributionField, x, spec: KernelSpec, offset_correct: bool = False,
           fx: float | None = None) -> Attribution:
    """Kernel-weighted mean of the field's attributions around ``x``.

    The base value is smoothed alongside. With ``offset_correct`` the
    residual ``fx - phi0 - sum(phi)`` is spread evenly over the features so
    the result satisfies efficiency at ``x``.
    """
    x = as_instance(x, field.points.n_features)
    w = _weights(field, x, spec)
    phi = w @ field.phi
    phi0 = float(w @ field.phi0)
    variance = None if field.variance is None else (w ** 2) @ field.variance
    meta = dict(field.meta, bandwidth=spec.label(), ess=float(1.0 / (w @ w)),
                offset_corrected=offset_correct)
    if offset_correct:
        if fx is None:
            raise StructuralError("offset correction needs the model output at x")
        phi = phi + (fx - phi0 - phi.sum()) / phi.shape[0]
    return Attribution(phi, phi0, variance, meta)


def smooth_variance(field: AttributionField, x, spec: KernelSpec) -> np.ndarray:
    """``sum_i w_i**2 var_i / (sum_i w_i)**2`` per feature."""
    if field.variance is None:
        raise VarianceUnavailable("field has no per-point variances")
    w = _weights(field, as_instance(x, field.points.n_features), spec)
    return (w ** 2) @ field.variance


def global_attribution(field: AttributionField) -> Attribution:
    """Unweighted mean over the field: the infinite-bandwidth limit."""
    variance = None if field.variance is None else field.variance.mean(axis=0) / len(field)
    return Attribution(field.phi.mean(axis=0), float(field.phi0.mean()), variance,
                       dict(field.meta, bandwidth="global"))


def smoother(field: AttributionField, spec: KernelSpec):
    return lambda x: smooth(field, x, spec).phi


def lipschitz_estimate(fn, x, radius: float, probes: int, seed: int) -> float:
    """Largest ``||fn(x) - fn(x0)|| / ||x - x0||`` over random probes ``x0`` near ``x``.

    ``fn`` maps an instance to an attribution vector, e.g. :func:`smoother`.
    Probes lie in the shell ``radius/2 <= ||x - x0|| < radius``; excluding
    the inner ball keeps the ratio away from division by tiny steps.
    """
    if probes < 2:
        raise StructuralError("need at least two probes")
    x = np.asarray(x, dtype=np.float64)
    gen = rngs.generator(seed, rngs.LIPSCHITZ)
    directions = gen.standard_normal((probes, x.shape[0]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * (0.5 + 0.5 * gen.random(probes))
    base = np.asarray(fn(x))
    best = 0.0
    for u, r in zip(directions, radii):
        x0 = x + r * u
        step = np.linalg.norm(x - x0)
        best = max(best, float(np.linalg.norm(base - np.asarray(fn(x0))) / step))
    return best
