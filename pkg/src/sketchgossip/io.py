"""Plain-text loaders for matrices, vectors and edge lists."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .graphs import Network


def _tokens(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.split() for ln in fh]
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln and not ln[0].startswith("#")]
    if not lines:
        raise InvalidInputError(f"{path} is empty")
    return lines


def _ints(tokens, count, path, what):
    try:
        vals = [int(t) for t in tokens]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: bad {what} header {' '.join(tokens)!r}") from exc
    if len(vals) != count or any(v < 0 for v in vals):
        raise InvalidInputError(f"{path}: {what} header needs {count} nonnegative integers")
    return vals


def _floats(tokens, path):
    try:
        arr = np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric entry") from exc
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{path}: non-finite entry")
    return arr


def load_matrix(path):
    """Read ``rows cols`` followed by row-major entries (any whitespace)."""
    lines = _tokens(path)
    rows, cols = _ints(lines[0], 2, path, "matrix")
    data = _floats([t for ln in lines[1:] for t in ln], path)
    if data.size != rows * cols:
        raise InvalidInputError(f"{path}: expected {rows * cols} entries, found {data.size}")
    return data.reshape(rows, cols)


def load_vector(path):
    """Read a length ``n`` followed by ``n`` entries."""
    lines = _tokens(path)
    (n,) = _ints(lines[0], 1, path, "vector")
    data = _floats([t for ln in lines[1:] for t in ln], path)
    if data.size != n:
        raise InvalidInputError(f"{path}: expected {n} entries, found {data.size}")
    return data


def save_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_vector(path, v):
    v = np.asarray(v, dtype=float).reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{v.size}\n" + "\n".join(repr(float(t)) for t in v) + "\n")


def load_edge_list(path):
    """Read ``n m`` then ``m`` lines ``i j`` (0-indexed) into a :class:`Network`."""
    lines = _tokens(path)
    n, m = _ints(lines[0], 2, path, "edge list")
    body = lines[1:]
    if len(body) != m:
        raise InvalidInputError(f"{path}: header says {m} edges, found {len(body)}")
    edges = []
    for k, ln in enumerate(body, start=2):
        if len(ln) != 2:
            raise InvalidInputError(f"{path}:{k}: expected 'i j'")
        try:
            edges.append((int(ln[0]), int(ln[1])))
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{k}: non-integer node id") from exc
    return Network(n, edges)


def save_edge_list(path, net):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{net.n} {net.m}\n")
        for i, j in net.edges:
            fh.write(f"{i} {j}\n")
