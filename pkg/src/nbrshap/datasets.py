"""CSV ingestion and synthetic fixture datasets.

A dataset CSV has a header row of feature names. Feature kinds come from
a sidecar next to it (``<csv>.schema``) with one ``name:kind`` line per
feature; without a sidecar every feature is continuous.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from . import rng as rngs
from .core import Dataset, FeatureKind
from .errors import ConfigError


def schema_path_for(path) -> str:
    return f"{os.fspath(path)}.schema"


def read_schema(path) -> dict[str, FeatureKind]:
    kinds = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, sep, kind = line.rpartition(":")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected name:kind")
            try:
                kinds[name.strip()] = FeatureKind(kind.strip().lower())
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: unknown feature kind {kind.strip()!r}") from None
    return kinds


def read_csv(path, schema_path=None) -> Dataset:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
    except (OSError, StopIteration) as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"non-numeric value in {path}: {exc}") from exc
    names = [h.strip() for h in header]
    schema_path = schema_path or schema_path_for(path)
    kinds = [FeatureKind.CONTINUOUS] * len(names)
    if os.path.exists(schema_path):
        declared = read_schema(schema_path)
        unknown = set(declared) - set(names)
        if unknown:
            raise ConfigError(f"schema names not in the CSV header: {sorted(unknown)}")
        kinds = [declared.get(n, FeatureKind.CONTINUOUS) for n in names]
    if any(len(r) != len(names) for r in rows):
        raise ConfigError(f"{path}: ragged rows")
    return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), len(names)), names, kinds)


def write_csv(dataset: Dataset, path, schema_path=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.names)
        for row in dataset.rows:
            writer.writerow([f"{v:.17g}" for v in row])
    with open(schema_path or schema_path_for(path), "w") as fh:
        for name, kind in zip(dataset.names, dataset.kinds):
            fh.write(f"{name}:{kind.value}\n")


def uniform_cube(n, dim=3, low=-2.0, high=2.0, seed=0) -> Dataset:
    gen = rngs.generator(seed, rngs.DATA)
    return Dataset(gen.uniform(low, high, size=(n, dim)))


def gaussian(n, dim=2, seed=0) -> Dataset:
    gen = rngs.generator(seed, rngs.DATA)
    return Dataset(gen.standard_normal((n, dim)))


def ring(n, radius=1.0, noise=0.02, seed=0) -> Dataset:
    """Points near a circle in the plane."""
    gen = rngs.generator(seed, rngs.DATA)
    angle = gen.uniform(0.0, 2.0 * np.pi, size=n)
    r = radius + noise * gen.standard_normal(n)
    return Dataset(np.column_stack([r * np.cos(angle), r * np.sin(angle)]))


SYNTHETIC = {"uniform": uniform_cube, "gaussian": gaussian, "ring": ring}
