"""Dense linear-algebra primitives: B-geometry, pseudoinverse, spectra.

Decompositions are delegated to LAPACK through :mod:`numpy.linalg`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, PositiveDefinitenessError

EIG_REL_TOL = 1e-10


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array or raise."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def as_vector(v, n=None, name="vector"):
    v = np.asarray(v, dtype=float).reshape(-1)
    if n is not None and v.size != n:
        raise InvalidInputError(f"{name} has length {v.size}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def pseudoinverse(M):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values at or below ``eps * max(rows, cols) * sigma_max`` are
    treated as zero; the rest are inverted.
    """
    M = as_matrix(M)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.shape[::-1])
    cutoff = np.finfo(float).eps * max(M.shape) * s[0]
    inv = np.zeros_like(s)
    keep = s > cutoff
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def sym_eigvals(M):
    """Eigenvalues of the symmetric part of ``M``, sorted descending."""
    M = as_matrix(M)
    return np.linalg.eigvalsh(0.5 * (M + M.T))[::-1]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (descending) with the derived extreme values.

    ``lambda_min_plus`` is the smallest eigenvalue strictly above
    ``1e-10 * lambda_max``; ``rank`` counts those eigenvalues.
    """

    eigenvalues: np.ndarray
    lambda_max: float
    lambda_min_plus: float
    rank: int

    @classmethod
    def from_eigenvalues(cls, eigs, rel_tol=EIG_REL_TOL):
        eigs = np.sort(np.asarray(eigs, dtype=float))[::-1]
        lmax = float(eigs[0]) if eigs.size else 0.0
        if lmax <= 0.0:
            return cls(eigs, lmax, 0.0, 0)
        positive = eigs[eigs > rel_tol * lmax]
        return cls(eigs, lmax, float(positive[-1]), int(positive.size))

    @classmethod
    def of(cls, M, rel_tol=EIG_REL_TOL):
        """Spectrum of a symmetric matrix."""
        return cls.from_eigenvalues(sym_eigvals(M), rel_tol)


def lambda_min_plus(M):
    return Spectrum.of(M).lambda_min_plus


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric positive definite matrix, dense or diagonal.

    Use :meth:`identity`, :meth:`diagonal` or :meth:`dense` to build one.
    """

    n: int
    diag: np.ndarray | None = None
    full: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def identity(cls, n):
        return cls(n, diag=np.ones(n))

    @classmethod
    def diagonal(cls, weights):
        w = as_vector(weights, name="weights")
        if np.any(w <= 0):
            raise InvalidInputError("diagonal weights must be positive")
        return cls(w.size, diag=w)

    @classmethod
    def dense(cls, M):
        M = as_matrix(M, "B")
        if M.shape[0] != M.shape[1]:
            raise InvalidInputError("B must be square")
        scale = max(np.max(np.abs(M)), 1.0)
        if np.max(np.abs(M - M.T)) > 1e-12 * scale:
            raise InvalidInputError("B must be symmetric")
        return cls(M.shape[0], full=0.5 * (M + M.T))

    @property
    def is_diagonal(self):
        return self.diag is not None

    @property
    def is_identity(self):
        if "eye" not in self._cache:
            self._cache["eye"] = self.is_diagonal and bool(np.all(self.diag == 1.0))
        return self._cache["eye"]

    def _eig(self):
        if "eig" not in self._cache:
            vals, vecs = np.linalg.eigh(self.full)
            if vals[0] <= 0:
                raise PositiveDefinitenessError("B is not positive definite")
            self._cache["eig"] = (vals, vecs)
        return self._cache["eig"]

    def to_dense(self):
        return np.diag(self.diag) if self.is_diagonal else self.full.copy()

    def inverse(self):
        """Dense B^{-1}."""
        if self.is_diagonal:
            return np.diag(1.0 / self.diag)
        if "inv" not in self._cache:
            vals, vecs = self._eig()
            self._cache["inv"] = (vecs / vals) @ vecs.T
        return self._cache["inv"]

    def inv_sqrt(self):
        """Dense B^{-1/2}."""
        if self.is_diagonal:
            return np.diag(1.0 / np.sqrt(self.diag))
        vals, vecs = self._eig()
        return (vecs / np.sqrt(vals)) @ vecs.T

    def matvec(self, v):
        if self.is_diagonal:
            return self.diag * v if v.ndim == 1 else self.diag[:, None] * v
        return self.full @ v

    def solve(self, v):
        """B^{-1} v for a vector or a matrix of columns."""
        v = np.asarray(v, dtype=float)
        if self.is_diagonal:
            return v / self.diag if v.ndim == 1 else v / self.diag[:, None]
        return self.inverse() @ v

    def inner(self, u, v):
        if self.is_identity:
            return float(np.dot(u, v))
        return float(np.dot(u, self.matvec(v)))

    def norm_sq(self, v):
        return self.inner(v, v)

    def norm(self, v):
        return float(np.sqrt(max(self.norm_sq(v), 0.0)))


def b_inner(B, u, v):
    """<u, v>_B = u^T B v."""
    return B.inner(u, v)


def b_norm(B, v):
    return B.norm(v)


def range_basis(M, rel_tol=1e-10):
    """Orthonormal basis of the column space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > rel_tol * s[0]]


def null_basis(M, rel_tol=1e-10):
    """Orthonormal basis of the null space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[rank:].T
