"""Analytic test models and the external-process model adapter."""

from __future__ import annotations

import os
import select
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import AdapterExited, CountMismatch, MalformedResponse, StructuralError

PROTOCOL_HEADER = "NBRSHAP-EVAL 1"


def indicator2d(X):
    x1, x2 = X[:, 0], X[:, 1]
    return np.where(x1 > 0, 2.0 * x2 ** 2, -(x2 ** 2))


def rulebased3d(X):
    return np.where((X[:, 0] > 1) | (X[:, 1] > 1), X[:, 2], 0.0)


def gaussmix_cdf(X):
    """CDF of the balanced mixture of N(-2, 0.6**2) and N(0.4, 1)."""
    x = X[:, 0]
    return 0.5 * ndtr((x + 2.0) / 0.6) + 0.5 * ndtr(x - 0.4)


@dataclass(frozen=True)
class Builtin:
    """One of the analytic models, callable on an ``(N, M)`` array.

    ``beta`` parametrises ``linear`` and ``c`` parametrises ``constant``.
    """

    name: str
    beta: tuple[float, ...] = ()
    c: float = 0.0

    ARITY = {"indicator2d": 2, "rulebased3d": 3, "gaussmix_cdf": 1}

    def __post_init__(self):
        if self.name not in ("indicator2d", "linear", "rulebased3d", "gaussmix_cdf", "constant"):
            raise StructuralError(f"unknown builtin {self.name!r}")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.name == "linear" and not self.beta:
            raise StructuralError("linear builtin needs coefficients")

    @property
    def arity(self) -> int | None:
        if self.name == "linear":
            return len(self.beta)
        return self.ARITY.get(self.name)

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (self.arity is not None and X.shape[1] != self.arity):
            raise StructuralError(f"{self.name} expects rows of width {self.arity}, got {X.shape}")
        if self.name == "constant":
            return np.full(X.shape[0], self.c)
        if self.name == "linear":
            # column-by-column keeps each row's sum independent of the batch
            out = np.zeros(X.shape[0])
            for j, b in enumerate(self.beta):
                out = out + b * X[:, j]
            return out
        return globals()[self.name](X)


def builtin_eval(spec: Builtin, rows) -> np.ndarray:
    return spec(rows)


class ExternalBlackBox:
    """Model served by a child process over a line protocol.

    Per batch the engine writes ``NBRSHAP-EVAL 1 <n_rows> <n_cols>``, then
    one comma-separated ``%.17g`` line per row, and reads back exactly
    ``n_rows`` lines holding one number each. Batches are serialised.
    The child's stderr is inherited.
    """

    def __init__(self, command):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0,
        )
        self._fd = self._proc.stdout.fileno()
        self._buf = b""
        self._lock = threading.Lock()
        self._rows_sent = 0

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        proc.stdout.close()

    def _readline(self) -> bytes | None:
        while b"\n" not in self._buf:
            chunk = os.read(self._fd, 65536)
            if not chunk:
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _pending_output(self) -> bool:
        if self._buf:
            return True
        ready, _, _ = select.select([self._fd], [], [], 0)
        return bool(ready) and self._proc.poll() is None

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise StructuralError("external black box expects a 2-D batch")
        n, m = X.shape
        if n == 0:
            return np.empty(0)
        with self._lock:
            offset = self._rows_sent
            self._rows_sent += n
            if self._pending_output():
                raise CountMismatch("adapter wrote lines beyond the previous batch's reply", offset)
            lines = [f"{PROTOCOL_HEADER} {n} {m}\n"]
            lines.extend(",".join(f"{v:.17g}" for v in row) + "\n" for row in X)
            payload = "".join(lines).encode()

            def write():
                # a separate writer keeps a streaming adapter from deadlocking on full pipes
                try:
                    self._proc.stdin.write(payload)
                    self._proc.stdin.flush()
                except OSError:
                    pass  # surfaces as EOF on the reply side

            writer = threading.Thread(target=write, daemon=True)
            writer.start()
            try:
                out = self._read_reply(n, offset)
            except BaseException:
                # the run aborts; a stuck writer must not block the error
                self._proc.kill()
                raise
            finally:
                writer.join()
            return out

    def _read_reply(self, n, offset):
        out = np.empty(n)
        for i in range(n):
            line = self._readline()
            if line is None:
                code = self._proc.wait()
                if i == 0:
                    raise AdapterExited(f"adapter exited with code {code}", offset)
                raise CountMismatch(f"adapter returned {i} of {n} values before exiting", offset)
            token = line.decode(errors="replace").strip()
            try:
                if "," in token or not token:
                    raise ValueError(token)
                out[i] = float(token)
            except ValueError:
                raise MalformedResponse(f"non-numeric response {token!r} at line {i}",
                                        offset, line_index=i) from None
        if self._buf:
            raise CountMismatch(f"adapter returned more than {n} values", offset)
        return out


def external_eval(adapter: ExternalBlackBox, rows) -> np.ndarray:
    return adapter(rows)
