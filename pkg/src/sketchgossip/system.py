"""Consistent linear systems ``Ax = b`` with a B-geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentSystemError, InvalidInputError
from .linalg import SpdMatrix, as_matrix, as_vector, pseudoinverse

CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Matrix ``A`` (m x n), right-hand side ``b`` and SPD geometry ``B``.

    Consistency is certified on construction: the least-squares residual
    must not exceed ``1e-8 * max(1, ||b||)``.  Row-wise sparse structure is
    cached so that single-row sketches touch only the nonzeros.
    """

    A: np.ndarray
    b: np.ndarray
    B: SpdMatrix
    _cache: dict = field(default_factory=dict, repr=False)

    def __init__(self, A, b, B=None, check=True):
        A = as_matrix(A, "A").copy()
        b = as_vector(b, A.shape[0], "b").copy()
        if B is None:
            B = SpdMatrix.identity(A.shape[1])
        elif not isinstance(B, SpdMatrix):
            B = SpdMatrix.dense(B)
        if B.n != A.shape[1]:
            raise InvalidInputError(f"B is {B.n}x{B.n}, A has {A.shape[1]} columns")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "_cache", {})
        if check:
            res = self.lsq_residual()
            if res > CONSISTENCY_TOL * max(1.0, float(np.linalg.norm(b))):
                raise InconsistentSystemError(res)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def lsq_residual(self):
        x = pseudoinverse(self.A) @ self.b
        return float(np.linalg.norm(self.A @ x - self.b))

    @property
    def BinvAt(self):
        """B^{-1} A^T (n x m)."""
        if "BinvAt" not in self._cache:
            self._cache["BinvAt"] = self.B.solve(self.A.T)
        return self._cache["BinvAt"]

    @property
    def gram(self):
        """A B^{-1} A^T (m x m)."""
        if "gram" not in self._cache:
            self._cache["gram"] = self.A @ self.BinvAt
        return self._cache["gram"]

    def rows(self):
        """Per-row sparse data ``(cols, vals, dcols, dvals, norm2)``.

        ``vals`` are the nonzeros of row i at ``cols``; ``dvals`` are the
        nonzeros of B^{-1} A_i^T at ``dcols``; ``norm2`` is ||A_i||^2_{B^{-1}}.
        """
        if "rows" not in self._cache:
            out = []
            for i in range(self.m):
                cols = np.flatnonzero(self.A[i])
                vals = self.A[i, cols].copy()
                if self.B.is_diagonal:
                    dcols, dvals = cols, vals / self.B.diag[cols]
                    norm2 = float(np.dot(vals, dvals))
                else:
                    col = self.BinvAt[:, i]
                    dcols = np.arange(self.n)
                    dvals = col.copy()
                    norm2 = float(np.dot(vals, col[cols]))
                out.append((cols, vals, dcols, dvals, norm2))
            self._cache["rows"] = out
        return self._cache["rows"]

    def row_norms_sq(self):
        """||B^{-1/2} A_i^T||^2 for every row."""
        return np.array([r[4] for r in self.rows()])

    def residual(self, x):
        return self.A @ x - self.b

    def project(self, x):
        """B-orthogonal projection of ``x`` onto {x : Ax = b}."""
        return project_onto_solution_set(self, x)

    def normalized(self):
        """Equivalent system with unit-norm rows (B must be the identity)."""
        norms = np.linalg.norm(self.A, axis=1)
        if np.any(norms == 0):
            raise InvalidInputError("cannot normalize a zero row")
        return LinearSystem(self.A / norms[:, None], self.b / norms, self.B, check=False)


def project_onto_solution_set(system, x):
    """Return ``x - B^{-1}A^T (A B^{-1} A^T)^+ (Ax - b)``.

    Raises :class:`InconsistentSystemError` when the system has no solution.
    """
    x = as_vector(x, system.n, "x")
    res = system.lsq_residual()
    if res > CONSISTENCY_TOL * max(1.0, float(np.linalg.norm(system.b))):
        raise InconsistentSystemError(res)
    if "gram_pinv" not in system._cache:
        system._cache["gram_pinv"] = pseudoinverse(system.gram)
    return x - system.BinvAt @ (system._cache["gram_pinv"] @ system.residual(x))
