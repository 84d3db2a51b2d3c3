"""Run configuration files.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored. Lists are comma-separated; where a list of vectors is needed
(per-feature bandwidths) vectors are separated by ``;``. Unknown keys are
an error.

Recognised keys, with defaults::

    dataset          CSV path, or synthetic:uniform | synthetic:gaussian | synthetic:ring
    schema           sidecar path (default <dataset>.schema)
    synthetic_n = 1000, synthetic_dim = 3, synthetic_low = -2, synthetic_high = 2,
    synthetic_radius = 1, synthetic_noise = 0.02, synthetic_seed = 0
    instance         inline vector(s), e.g. "1,2; 3,4"
    instance_row     row index/indices into the dataset
    blackbox         builtin: indicator2d | linear | rulebased3d | gaussmix_cdf | constant
    beta             coefficients for linear
    constant = 0     value for constant
    external         command line of an external adapter (instead of blackbox)
    mode = exact     exact | kernelshap | formula_mc
    weighting = uniform   uniform | neighbourhood | anti
    sigma            scalar, per-feature vector, or "auto" (adaptive choice on the grid)
    subset_mode = full    full | dropped
    grid             sweep bandwidths, or auto:K for K geometric points on (0, 3M]
    coalitions = 2048
    references       subsample size L (default: all rows)
    variance = false
    normalise = none      none | by_std | by_abs_sum
    seed = 0
    workers = 1
    out              output path (default: stdout)
    field_size       smooth: number of field points drawn from the dataset (default: all)
    field_refs       smooth: independent references per field point (default: shared)
    smooth_sigma     smooth: bandwidths, ";"-separated, each scalar or per-feature vector
    offset_correct = false
    audit_sigma      audit: bandwidths; "uniform" for plain sampling
    audit_holdout = 200, audit_k = 5, audit_n (default: holdout), audit_runs = 1
    bench_L = 100, bench_M = 11, bench_C = 2048, bench_bandwidths = 1,50
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _vectors(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(part) for part in text.split(";") if part.strip())


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected integers, got {text!r}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    dataset: str | None = None
    schema: str | None = None
    synthetic_n: int = 1000
    synthetic_dim: int = 3
    synthetic_low: float = -2.0
    synthetic_high: float = 2.0
    synthetic_radius: float = 1.0
    synthetic_noise: float = 0.02
    synthetic_seed: int = 0
    instance: tuple | None = None
    instance_row: tuple | None = None
    blackbox: str | None = None
    beta: tuple | None = None
    constant: float = 0.0
    external: str | None = None
    mode: str = "exact"
    weighting: str = "uniform"
    sigma: tuple | str | None = None
    subset_mode: str = "full"
    grid: tuple | str | None = None
    coalitions: int = 2048
    references: int | None = None
    variance: bool = False
    normalise: str = "none"
    seed: int = 0
    workers: int = 1
    out: str | None = None
    field_size: int | None = None
    field_refs: int | None = None
    smooth_sigma: tuple | None = None
    offset_correct: bool = False
    audit_sigma: tuple | None = None
    audit_holdout: int = 200
    audit_k: int = 5
    audit_n: int | None = None
    audit_runs: int = 1
    bench_L: tuple = (100,)
    bench_M: tuple = (11,)
    bench_C: tuple = (2048,)
    bench_bandwidths: tuple = (1, 50)
    source: str | None = field(default=None, repr=False)

    # fields that never influence results
    VOLATILE = ("out", "workers", "source")

    def resolved(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.VOLATILE}

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dumps(self) -> str:
        """Render back into the config grammar (volatile keys omitted)."""
        lines = []
        for k, v in self.resolved().items():
            if v is None:
                continue
            if isinstance(v, (list, tuple)):
                if v and isinstance(v[0], (list, tuple)):
                    v = "; ".join(",".join(_fmt(t) for t in vec) for vec in v)
                else:
                    v = ",".join(_fmt(t) for t in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = _fmt(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


_PARSERS = {
    "synthetic_n": int, "synthetic_dim": int, "synthetic_low": float, "synthetic_high": float,
    "synthetic_radius": float, "synthetic_noise": float, "synthetic_seed": int,
    "instance": _vectors, "instance_row": _ints, "beta": _floats, "constant": float,
    "coalitions": int, "references": int, "variance": _bool, "seed": int, "workers": int,
    "field_size": int, "field_refs": int, "smooth_sigma": _vectors, "offset_correct": _bool,
    "audit_holdout": int, "audit_k": int, "audit_n": int, "audit_runs": int,
    "bench_L": _ints, "bench_M": _ints, "bench_C": _ints, "bench_bandwidths": _ints,
}

_CHOICES = {
    "mode": ("exact", "kernelshap", "formula_mc"),
    "weighting": ("uniform", "neighbourhood", "anti"),
    "subset_mode": ("full", "dropped"),
    "normalise": ("none", "by_std", "by_abs_sum"),
}


def _parse_value(key, raw):
    if key in _PARSERS:
        try:
            return _PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    if key in _CHOICES:
        if raw not in _CHOICES[key]:
            raise ConfigError(f"{key} must be one of {', '.join(_CHOICES[key])}; got {raw!r}")
        return raw
    if key == "sigma":
        return "auto" if raw == "auto" else _floats(raw)
    if key == "grid":
        if raw.startswith("auto:"):
            int(raw[5:])
            return raw
        return _floats(raw)
    if key == "audit_sigma":
        return tuple(math.inf if t.strip() == "uniform" else float(t) for t in raw.split(",")
                     if t.strip())
    return raw


def parse(text: str, source: str | None = None) -> RunConfig:
    names = {f.name for f in fields(RunConfig)} - {"source"}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"{source or 'config'}:{lineno}: expected key = value")
        if key not in names:
            raise ConfigError(f"{source or 'config'}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except (ConfigError, ValueError) as exc:
            raise ConfigError(f"{source or 'config'}:{lineno}: {exc}") from None
    cfg = RunConfig(**values, source=source)
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text, str(path))


def validate(cfg: RunConfig):
    if cfg.dataset is None:
        raise ConfigError("dataset is required")
    if (cfg.blackbox is None) == (cfg.external is None):
        raise ConfigError("exactly one of blackbox and external must be given")
    if cfg.instance is not None and cfg.instance_row is not None:
        raise ConfigError("give either instance or instance_row, not both")
    if cfg.weighting != "uniform" and cfg.sigma is None and cfg.grid is None:
        raise ConfigError(f"{cfg.weighting} weighting needs sigma or grid")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.blackbox == "linear" and not cfg.beta:
        raise ConfigError("linear blackbox needs beta")
