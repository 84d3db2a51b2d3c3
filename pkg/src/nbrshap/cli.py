"""Batch front end: ``nbrshap explain|sweep|smooth|audit|bench --config <path>``.

Exit codes: 0 success, 2 configuration error, 3 black-box failure,
4 any other estimator error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as config_mod
from . import datasets
from . import rng as rngs
from .blackboxes import Builtin, ExternalBlackBox
from .core import Dataset, EvalLedger, as_instance
from .errors import BlackBoxError, ConfigError, NbrShapError, StructuralError
from .estimators import EstimatorConfig, Weighting, explain, explain_sweep, normalise
from .kernels import KernelSpec, SubsetMode, select_bandwidth, sweep_grid
from .manifold import audit
from .smoothing import build_field, global_attribution, smooth

COMMANDS = ("explain", "sweep", "smooth", "audit", "bench")


def _num(v) -> str:
    if v is None:
        return ""
    return f"{float(v):.17g}"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(t) for t in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(t) for t in v]
    if isinstance(v, dict):
        return {k: _jsonable(t) for k, t in v.items()}
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# building blocks shared by the commands


def load_dataset(cfg) -> Dataset:
    name = cfg.dataset
    if name.startswith("synthetic:"):
        kind = name.split(":", 1)[1]
        if kind == "uniform":
            return datasets.uniform_cube(cfg.synthetic_n, cfg.synthetic_dim, cfg.synthetic_low,
                                         cfg.synthetic_high, cfg.synthetic_seed)
        if kind == "gaussian":
            return datasets.gaussian(cfg.synthetic_n, cfg.synthetic_dim, cfg.synthetic_seed)
        if kind == "ring":
            return datasets.ring(cfg.synthetic_n, cfg.synthetic_radius, cfg.synthetic_noise,
                                 cfg.synthetic_seed)
        raise ConfigError(f"unknown synthetic dataset {kind!r}")
    return datasets.read_csv(name, cfg.schema)


def make_blackbox(cfg, n_features):
    if cfg.external is not None:
        return ExternalBlackBox(cfg.external)
    try:
        bb = Builtin(cfg.blackbox, beta=cfg.beta or (), c=cfg.constant)
    except StructuralError as exc:
        raise ConfigError(str(exc)) from None
    if bb.arity is not None and bb.arity != n_features:
        raise ConfigError(f"{bb.name} takes {bb.arity} features; dataset has {n_features}")
    return bb


def instances(cfg, data: Dataset, required=True) -> list[np.ndarray]:
    if cfg.instance is not None:
        try:
            return [as_instance(v, data.n_features) for v in cfg.instance]
        except StructuralError as exc:
            raise ConfigError(f"instance: {exc}") from None
    if cfg.instance_row is not None:
        bad = [r for r in cfg.instance_row if not 0 <= r < data.n_rows]
        if bad:
            raise ConfigError(f"instance_row out of range: {bad}")
        return [data.rows[r].copy() for r in cfg.instance_row]
    if required:
        raise ConfigError("an instance selector (instance or instance_row) is required")
    return []


def kernel_from(values, subset_mode, n_features) -> KernelSpec:
    values = tuple(float(v) for v in values)
    try:
        if len(values) == 1:
            return KernelSpec(values[0], SubsetMode(subset_mode))
        if len(values) != n_features:
            raise ConfigError(f"bandwidth vector has {len(values)} entries for {n_features} features")
        return KernelSpec(values, SubsetMode(subset_mode))
    except StructuralError as exc:
        raise ConfigError(str(exc)) from None


def grid_from(cfg, n_features) -> np.ndarray:
    if cfg.grid is None:
        return sweep_grid(n_features, 50)
    if isinstance(cfg.grid, str):
        return sweep_grid(n_features, int(cfg.grid[5:]))
    return np.asarray(cfg.grid, dtype=np.float64)


def estimator_config(cfg, kernel=None, weighting=None) -> EstimatorConfig:
    weighting = weighting or cfg.weighting
    if Weighting(weighting) is Weighting.UNIFORM:
        kernel = None
    try:
        return EstimatorConfig(mode=cfg.mode, weighting=weighting, kernel=kernel,
                               n_coalitions=cfg.coalitions, n_references=cfg.references,
                               seed=cfg.seed, compute_variance=cfg.variance,
                               workers=cfg.workers)
    except StructuralError as exc:
        raise ConfigError(str(exc)) from None


def instance_kernel(cfg, x, refs):
    """Kernel for one instance; ``sigma = auto`` picks it from the grid."""
    if cfg.weighting == "uniform":
        return None, None
    if cfg.sigma == "auto":
        sigma, saturated = select_bandwidth(x, refs, grid_from(cfg, refs.n_features))
        return kernel_from((sigma,), cfg.subset_mode, refs.n_features), saturated
    if cfg.sigma is None:
        raise ConfigError(f"{cfg.weighting} weighting needs sigma")
    return kernel_from(cfg.sigma, cfg.subset_mode, refs.n_features), None


# ---------------------------------------------------------------------------
# commands; each returns the output text


def cmd_explain(cfg) -> str:
    data = load_dataset(cfg)
    xs = instances(cfg, data)
    bb = make_blackbox(cfg, data.n_features)
    ledger = EvalLedger()
    records = []
    try:
        for i, x in enumerate(xs):
            kernel, saturated = instance_kernel(cfg, x, data)
            attr = explain(bb, ledger, x, data, estimator_config(cfg, kernel))
            fx = float(np.asarray(bb(x[None, :]))[0])
            attr = normalise(attr, cfg.normalise)
            rec = {
                "instance_index": i,
                "instance": x,
                "features": list(data.names),
                "phi": attr.phi,
                "variance": attr.variance,
                "phi0": attr.phi0,
                "phi_sum": float(attr.phi.sum()),
                "fx": fx,
                "eval_count": attr.meta["eval_count"],
                "seed": cfg.seed,
                "estimator": attr.meta["estimator"],
                "weighting": attr.meta["weighting"],
                "bandwidth": attr.meta["bandwidth"],
                "normalisation": cfg.normalise,
                "singular": attr.meta["singular"],
                "config_hash": cfg.digest(),
            }
            if saturated is not None:
                rec["bandwidth_saturated"] = saturated
            records.append(rec)
    finally:
        _close(bb)
    doc = {"command": "explain", "config_hash": cfg.digest(), "seed": cfg.seed,
           "config": cfg.resolved(), "records": records}
    return json.dumps(_jsonable(doc), indent=2) + "\n"


def cmd_sweep(cfg) -> str:
    data = load_dataset(cfg)
    xs = instances(cfg, data)
    bb = make_blackbox(cfg, data.n_features)
    grid = grid_from(cfg, data.n_features)
    weighting = "neighbourhood" if cfg.weighting == "uniform" else cfg.weighting
    kernels = [kernel_from((s,), cfg.subset_mode, data.n_features) for s in grid]
    ledger = EvalLedger()
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["config_hash", "seed", "instance_index", "sigma", "feature", "phi",
                     "variance", "phi0", "eval_count"])
    try:
        for i, x in enumerate(xs):
            est = estimator_config(cfg, kernels[0], weighting)
            attrs = explain_sweep(bb, ledger, x, data, est, kernels)
            for sigma, attr in zip(grid, attrs):
                attr = normalise(attr, cfg.normalise)
                for j, name in enumerate(data.names):
                    var = None if attr.variance is None else attr.variance[j]
                    writer.writerow([cfg.digest(), cfg.seed, i, _num(sigma), name,
                                     _num(attr.phi[j]), _num(var), _num(attr.phi0),
                                     attr.meta["eval_count"]])
    finally:
        _close(bb)
    return out.getvalue()


def cmd_smooth(cfg) -> str:
    data = load_dataset(cfg)
    xs = instances(cfg, data)
    if not cfg.smooth_sigma:
        raise ConfigError("smooth needs smooth_sigma")
    specs = [kernel_from(v, "full", data.n_features) for v in cfg.smooth_sigma]
    bb = make_blackbox(cfg, data.n_features)
    ledger = EvalLedger()
    n_field = data.n_rows if cfg.field_size is None else cfg.field_size
    if not 1 <= n_field <= data.n_rows:
        raise ConfigError(f"field_size must lie in 1..{data.n_rows}")
    idx = np.arange(data.n_rows)
    if n_field < data.n_rows:
        idx = np.sort(rngs.generator(cfg.seed, rngs.FIELD).choice(data.n_rows, n_field,
                                                                    replace=False))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["config_hash", "seed", "kind", "instance_index", "sigma", "feature",
                     "phi", "variance", "phi0"])

    def emit(kind, i, label, attr):
        attr = normalise(attr, cfg.normalise)
        for j, name in enumerate(data.names):
            var = None if attr.variance is None else attr.variance[j]
            writer.writerow([cfg.digest(), cfg.seed, kind, i, label, name, _num(attr.phi[j]),
                             _num(var), _num(attr.phi0)])

    try:
        if cfg.sigma == "auto":
            raise ConfigError("smooth needs an explicit sigma for the field estimator")
        kernel, _ = instance_kernel(cfg, None, data)
        est = estimator_config(cfg, kernel)
        fld = build_field(bb, ledger, data.subset(idx), data, est, cfg.field_refs, cfg.workers)
        emit("global", "", "global", global_attribution(fld))
        for i, x in enumerate(xs):
            fx = float(np.asarray(bb(x[None, :]))[0]) if cfg.offset_correct else None
            refs = data
            if cfg.field_refs is not None and cfg.field_refs < data.n_rows:
                gen = rngs.generator(cfg.seed, rngs.FIELD, n_field + i)
                refs = data.subset(np.sort(gen.choice(data.n_rows, cfg.field_refs,
                                                      replace=False)))
            emit("raw", i, "raw", explain(bb, ledger, x, refs, replace(est, workers=1)))
            for spec in specs:
                emit("smoothed", i, spec.label(),
                     smooth(fld, x, spec, offset_correct=cfg.offset_correct, fx=fx))
    finally:
        _close(bb)
    return out.getvalue()


def _ring_distance(points, radius):
    return float(np.abs(np.linalg.norm(points, axis=1) - radius).mean())


def cmd_audit(cfg) -> str:
    data = load_dataset(cfg)
    if not cfg.audit_sigma:
        raise ConfigError("audit needs audit_sigma")
    if not 1 <= cfg.audit_holdout < data.n_rows:
        raise ConfigError(f"audit_holdout must lie in 1..{data.n_rows - 1}")
    ring = cfg.dataset == "synthetic:ring"
    reports = []
    summary = []
    for sigma in cfg.audit_sigma:
        if math.isinf(sigma):
            est = estimator_config(cfg, None, "uniform")
        else:
            est = estimator_config(cfg, kernel_from((sigma,), cfg.subset_mode, data.n_features),
                                   "neighbourhood")
        aucs, dists = [], []
        for run in range(cfg.audit_runs):
            run_seed = cfg.seed + run
            perm = rngs.generator(run_seed, rngs.MANIFOLD, 1).permutation(data.n_rows)
            real = data.rows[perm[:cfg.audit_holdout]]
            background = data.subset(np.sort(perm[cfg.audit_holdout:]))
            rep = audit(real, background, est, n=cfg.audit_n, k=cfg.audit_k, seed=run_seed)
            entry = {"sigma": "uniform" if math.isinf(sigma) else sigma, "run": run,
                     "seed": run_seed, "n": rep.n, "k": rep.k, "auc": rep.auc,
                     "mean_manifold_distance": rep.mean_manifold_distance,
                     "config_hash": cfg.digest()}
            if ring:
                entry["mean_ring_distance"] = _ring_distance(rep.concatenated,
                                                             cfg.synthetic_radius)
                dists.append(entry["mean_ring_distance"])
            aucs.append(rep.auc)
            reports.append(entry)
        row = {"sigma": "uniform" if math.isinf(sigma) else sigma,
               "median_auc": float(np.median(aucs)), "runs": cfg.audit_runs}
        if ring:
            row["median_ring_distance"] = float(np.median(dists))
        summary.append(row)
    doc = {"command": "audit", "config_hash": cfg.digest(), "seed": cfg.seed,
           "config": cfg.resolved(), "reports": reports, "summary": summary}
    return json.dumps(_jsonable(doc), indent=2) + "\n"


def cmd_bench(cfg) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["L", "M", "C", "bandwidths", "wall_seconds", "eval_count"])
    for L in cfg.bench_L:
        for M in cfg.bench_M:
            data = datasets.gaussian(L, M, cfg.seed)
            bb = Builtin("linear", beta=tuple(np.ones(M)))
            for C in cfg.bench_C:
                for nb in cfg.bench_bandwidths:
                    grid = sweep_grid(M, nb) if nb > 1 else np.array([1.0])
                    kernels = [KernelSpec(float(s)) for s in grid]
                    try:
                        est = EstimatorConfig(mode="kernelshap", weighting="neighbourhood",
                                              kernel=kernels[0], n_coalitions=C, seed=cfg.seed,
                                              workers=cfg.workers)
                    except StructuralError as exc:
                        raise ConfigError(str(exc)) from None
                    ledger = EvalLedger()
                    start = time.perf_counter()
                    explain_sweep(bb, ledger, data.rows[0], data, est, kernels)
                    wall = time.perf_counter() - start
                    writer.writerow([L, M, C, nb, _num(wall), ledger.counter])
    return out.getvalue()


def _close(bb):
    if isinstance(bb, ExternalBlackBox):
        bb.close()


RUNNERS = {"explain": cmd_explain, "sweep": cmd_sweep, "smooth": cmd_smooth,
           "audit": cmd_audit, "bench": cmd_bench}


def run(command: str, cfg) -> str:
    return RUNNERS[command](cfg)


def _parser():
    p = argparse.ArgumentParser(prog="nbrshap", description="Neighbourhood-weighted Shapley attributions.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--seed", type=int, help="overrides the seed in the config")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--workers", type=int, help="evaluation threads")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config)
        overrides = {k: v for k, v in (("seed", args.seed), ("out", args.out),
                                       ("workers", args.workers)) if v is not None}
        cfg = replace(cfg, **overrides)
        config_mod.validate(cfg)
        text = run(args.command, cfg)
        if cfg.out:
            try:
                with open(cfg.out, "w", newline="") as fh:
                    fh.write(text)
                with open(f"{cfg.out}.cfg", "w") as fh:
                    fh.write(cfg.dumps())
            except OSError as exc:
                raise ConfigError(f"cannot write {cfg.out}: {exc}") from exc
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"nbrshap: config error: {exc}", file=sys.stderr)
        return 2
    except BlackBoxError as exc:
        print(f"nbrshap: black box failed: {exc}", file=sys.stderr)
        return 3
    except NbrShapError as exc:
        print(f"nbrshap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
