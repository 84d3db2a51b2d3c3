"""Domain types shared by every estimator.

Instances are plain float64 vectors. Categorical features carry integer
codes in the same real-valued slot and are passed to black boxes as-is.
Coalitions are bitmasks: bit ``j`` set means feature ``j`` is taken from
the explained instance.
"""

from __future__ import annotations

import enum
import hashlib
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import BlackBoxError, StructuralError

BlackBox = Callable[[np.ndarray], np.ndarray]
"""Anything mapping an ``(N, M)`` float array to ``N`` outputs, deterministically."""

# Rows per black-box call. The partition is fixed so outputs never depend
# on the worker count.
BATCH_ROWS = 65536


class FeatureKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


def as_instance(x, n_features: int | None = None) -> np.ndarray:
    x = np.array(x, dtype=np.float64).reshape(-1)
    if n_features is not None and x.shape[0] != n_features:
        raise StructuralError(f"instance has {x.shape[0]} features, expected {n_features}")
    if not np.all(np.isfinite(x)):
        raise StructuralError("instance values must be finite")
    x.setflags(write=False)
    return x


class Dataset:
    """Background reference rows with a feature schema.

    Continuous features are standardised for distance computations with the
    per-feature mean and standard deviation of ``rows`` unless ``center`` and
    ``scale`` are given. A constant continuous column gets scale 1 and is
    listed in :attr:`zero_variance`.
    """

    def __init__(self, rows, names=None, kinds=None, center=None, scale=None):
        rows = np.array(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise StructuralError("dataset needs a non-empty 2-D array of rows")
        if not np.all(np.isfinite(rows)):
            raise StructuralError("dataset rows must be finite")
        n, m = rows.shape
        self.names = tuple(names) if names is not None else tuple(f"x{j + 1}" for j in range(m))
        if kinds is None:
            kinds = [FeatureKind.CONTINUOUS] * m
        self.kinds = tuple(FeatureKind(k) for k in kinds)
        if len(self.names) != m or len(self.kinds) != m:
            raise StructuralError("schema length does not match row width")
        rows.setflags(write=False)
        self.rows = rows

        self.categorical = np.array([k is FeatureKind.CATEGORICAL for k in self.kinds])
        center = rows.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
        if scale is None:
            scale = rows.std(axis=0)
            flat = (scale == 0) & ~self.categorical
            self.zero_variance = tuple(self.names[j] for j in np.flatnonzero(flat))
            if self.zero_variance:
                warnings.warn(
                    f"zero-variance features use scale 1: {', '.join(self.zero_variance)}",
                    stacklevel=2,
                )
            scale = np.where(scale == 0, 1.0, scale)
        else:
            scale = np.asarray(scale, dtype=np.float64)
            self.zero_variance = ()
        scale = np.where(self.categorical, 1.0, scale)
        center = np.where(self.categorical, 0.0, center)
        if center.shape != (m,) or scale.shape != (m,) or np.any(scale <= 0):
            raise StructuralError("center/scale must be length-M with positive scale")
        center.setflags(write=False)
        scale.setflags(write=False)
        self.center = center
        self.scale = scale

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.n_rows

    def __getitem__(self, i) -> np.ndarray:
        return self.rows[i]

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        h.update(np.asarray(self.rows.shape, dtype=np.int64).tobytes())
        h.update(self.rows.tobytes())
        h.update("|".join(k.value for k in self.kinds).encode())
        return h.hexdigest()

    def subset(self, index) -> "Dataset":
        """Rows ``index`` with this dataset's schema and standardisation."""
        return Dataset(self.rows[index], self.names, self.kinds, self.center, self.scale)

    def like(self, rows) -> "Dataset":
        """New rows sharing this dataset's schema and standardisation."""
        return Dataset(rows, self.names, self.kinds, self.center, self.scale)

    def same_schema(self, other: "Dataset") -> bool:
        return self.names == other.names and self.kinds == other.kinds


@dataclass(frozen=True)
class Coalition:
    mask: int
    n_features: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.n_features:
            raise StructuralError(f"mask {self.mask:#x} does not fit in {self.n_features} bits")

    @classmethod
    def of(cls, members: Sequence[int], n_features: int) -> "Coalition":
        mask = 0
        for j in members:
            if not 0 <= j < n_features:
                raise StructuralError(f"feature index {j} out of range")
            mask |= 1 << j
        return cls(mask, n_features)

    @classmethod
    def full(cls, n_features: int) -> "Coalition":
        return cls((1 << n_features) - 1, n_features)

    @classmethod
    def empty(cls, n_features: int) -> "Coalition":
        return cls(0, n_features)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.n_features) if self.mask >> j & 1)

    def __contains__(self, j: int) -> bool:
        return bool(self.mask >> j & 1)

    def complement(self) -> "Coalition":
        return Coalition(((1 << self.n_features) - 1) ^ self.mask, self.n_features)

    def indicator(self) -> np.ndarray:
        return mask_matrix([self.mask], self.n_features)[0]


def mask_matrix(masks, n_features: int) -> np.ndarray:
    """Boolean ``(C, M)`` membership matrix for integer masks."""
    masks = np.asarray(masks, dtype=np.int64).reshape(-1, 1)
    return ((masks >> np.arange(n_features, dtype=np.int64)) & 1).astype(bool)


def popcount(masks) -> np.ndarray:
    return mask_matrix(masks, 63).sum(axis=1)


@dataclass
class Attribution:
    phi: np.ndarray
    phi0: float
    variance: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        """Base value plus all attributions; equals v(full) under efficiency."""
        return float(self.phi0 + self.phi.sum())


def concatenate(x, ref, s: Coalition) -> np.ndarray:
    """Features in ``s`` from ``x``, the rest from ``ref``."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape or x.shape != (s.n_features,):
        raise StructuralError("instance, reference and coalition widths differ")
    return np.where(s.indicator(), x, ref)


class EvalLedger:
    """Cache of masked model outputs plus a counter of rows sent to the model.

    Entries are keyed by (model, instance, reference set, coalition mask) and hold
    the outputs for every reference row in order. Cache hits leave the
    counter untouched. Safe to share between threads; concurrent callers
    are serialised.
    """

    def __init__(self):
        self._cache: dict[tuple, np.ndarray] = {}
        self._models: dict[int, object] = {}  # pins models so their ids stay unique
        self._lock = threading.RLock()
        self._counter = 0

    @property
    def counter(self) -> int:
        return self._counter

    def __len__(self):
        return len(self._cache)

    def evaluate(self, bb: BlackBox, x, refs: Dataset, masks, workers: int = 1,
                 instance_id=None) -> np.ndarray:
        """Masked outputs ``f(x_S, refs[l]_~S)`` as a ``(len(masks), L)`` array."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (refs.n_features,):
            raise StructuralError("instance width does not match reference schema")
        masks = [int(m) for m in np.atleast_1d(masks)]
        iid = x.tobytes() if instance_id is None else instance_id
        with self._lock:
            self._models.setdefault(id(bb), bb)
            key0 = (id(bb), iid, refs.fingerprint)
            todo = sorted({m for m in masks if (key0 + (m,)) not in self._cache})
            if todo:
                for m, out in zip(todo, _run_masks(bb, x, refs, todo, workers)):
                    self._cache[key0 + (m,)] = out
                self._counter += len(todo) * refs.n_rows
            return np.stack([self._cache[key0 + (m,)] for m in masks]) if masks else \
                np.empty((0, refs.n_rows))


def _run_masks(bb, x, refs, masks, workers):
    L, M = refs.rows.shape
    per_batch = max(1, BATCH_ROWS // L)
    chunks = [masks[i:i + per_batch] for i in range(0, len(masks), per_batch)]
    offsets = np.cumsum([0] + [len(c) * L for c in chunks])

    def run(k):
        chunk = chunks[k]
        member = mask_matrix(chunk, M)
        Z = np.where(member[:, None, :], x, refs.rows[None, :, :]).reshape(-1, M)
        try:
            y = np.asarray(bb(Z), dtype=np.float64).reshape(-1)
        except BlackBoxError:
            raise
        except Exception as exc:
            raise BlackBoxError(f"black box raised {type(exc).__name__}: {exc}",
                                int(offsets[k])) from exc
        if y.shape[0] != Z.shape[0]:
            raise BlackBoxError(f"black box returned {y.shape[0]} outputs for {Z.shape[0]} rows",
                                int(offsets[k]))
        return y.reshape(len(chunk), L)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(chunks))))
    else:
        results = [run(k) for k in range(len(chunks))]
    return [row for block in results for row in block]


def masked_eval(bb: BlackBox, ledger: EvalLedger, x, refs: Dataset, s: Coalition,
                workers: int = 1) -> np.ndarray:
    """Vector of ``bb(concatenate(x, refs[l], s))`` over all references."""
    if s.n_features != refs.n_features:
        raise StructuralError("coalition width does not match reference schema")
    return ledger.evaluate(bb, x, refs, [s.mask], workers)[0]
