"""Persistence formats for symmetric matrices.

Binary layout (little-endian): int64 N, then the upper triangle including the
diagonal, row by row, as float64 (N(N+1)/2 values).
CSV layout: header ``i,j,value`` and one row per upper-triangle entry, floats
written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import ConfigError

_HEADER = np.dtype("<i8")
_VALUE = np.dtype("<f8")


def _upper(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {W.shape}")
    if not np.array_equal(W, W.T):
        raise ConfigError("matrix is not exactly symmetric")
    return W[np.triu_indices(W.shape[0])]


def _from_upper(N: int, values: np.ndarray) -> np.ndarray:
    W = np.zeros((N, N))
    W[np.triu_indices(N)] = values
    return W + np.triu(W, 1).T


def write_matrix_binary(W, path) -> None:
    vals = _upper(W)
    with open(path, "wb") as fh:
        fh.write(np.array([np.asarray(W).shape[0]], dtype=_HEADER).tobytes())
        fh.write(vals.astype(_VALUE).tobytes())


def read_matrix_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ConfigError(f"{path}: truncated matrix header")
    N = int(np.frombuffer(raw[:8], dtype=_HEADER)[0])
    count = N * (N + 1) // 2
    if N < 1 or len(raw) != 8 + 8 * count:
        raise ConfigError(f"{path}: size {len(raw)} bytes does not match N={N}")
    return _from_upper(N, np.frombuffer(raw[8:], dtype=_VALUE))


def write_matrix_csv(W, path) -> None:
    W = np.asarray(W, dtype=float)
    _upper(W)
    N = W.shape[0]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["i", "j", "value"])
        for i in range(N):
            for j in range(i, N):
                out.writerow([i, j, repr(float(W[i, j]))])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty matrix CSV")
    N = 1 + max(int(r["j"]) for r in rows)
    W = np.full((N, N), np.nan)
    for r in rows:
        i, j, v = int(r["i"]), int(r["j"]), float(r["value"])
        W[i, j] = W[j, i] = v
    if np.isnan(W).any():
        raise ConfigError(f"{path}: matrix CSV misses entries")
    return W
