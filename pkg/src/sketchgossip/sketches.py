"""Sketch distributions and the per-sketch quantities Z, f_S and the step.

A drawn sketch is either an integer index array (``S = I_{:C}``) or a
float vector (Gaussian sketch, ``S`` a single column).
"""

from __future__ import annotations

import bisect

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidInputError, UnsupportedClosedFormError
from .linalg import Spectrum, null_basis, pseudoinverse

ENUMERATION_LIMIT = 20000


def _check_probabilities(p):
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidInputError("probabilities must be finite and nonnegative")
    if abs(p.sum() - 1.0) > 1e-12:
        raise InvalidInputError(f"probabilities sum to {p.sum():.15g}, expected 1")
    return p


def _sample_cdf(cdf, rng, size=None):
    # inverse-CDF on rng.random() so that scalar and batched draws consume
    # the same stream
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1)


class SketchDistribution:
    """Base class; subclasses implement :meth:`draw`."""

    finite_support = True

    def draw(self, m, rng):
        raise NotImplementedError

    def validate(self, system):
        """Check compatibility with ``system``; raise on mismatch."""


@dataclass(frozen=True, eq=False)
class Coordinate(SketchDistribution):
    """Single row ``i`` with probability ``p_i``."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = _check_probabilities(self.probabilities)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "_cdf", np.cumsum(p))
        object.__setattr__(self, "_cdf_list", self._cdf.tolist())

    @classmethod
    def uniform(cls, m):
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def convenient(cls, system):
        """p_i proportional to ||B^{-1/2} A_i^T||^2."""
        norms = system.row_norms_sq()
        if np.any(norms <= 0):
            raise InvalidInputError("zero rows make row-norm probabilities undefined")
        return cls(norms / norms.sum())

    def validate(self, system):
        if self.probabilities.size != system.m:
            raise InvalidInputError("probability vector length differs from row count")
        if np.any(system.row_norms_sq()[self.probabilities > 0] <= 0):
            raise InvalidInputError("coordinate sketch would select a zero row")

    def draw(self, m, rng):
        # bisect_right matches searchsorted(side="right") on the same floats
        i = bisect.bisect_right(self._cdf_list, rng.random())
        return np.array([min(i, len(self._cdf_list) - 1)])

    def draw_many(self, rng, size):
        """Row indices for ``size`` consecutive draws (same stream as :meth:`draw`)."""
        return _sample_cdf(self._cdf, rng, size)

    def support(self, m):
        return [(np.array([i]), float(p)) for i, p in enumerate(self.probabilities) if p > 0]


@dataclass(frozen=True)
class UniformBlock(SketchDistribution):
    """Uniformly random subset of ``tau`` distinct rows."""

    tau: int

    def __post_init__(self):
        if int(self.tau) < 1:
            raise InvalidInputError("tau must be at least 1")

    def validate(self, system):
        if self.tau > system.m:
            raise InvalidInputError(f"tau={self.tau} exceeds row count {system.m}")

    def draw(self, m, rng):
        # partial Fisher-Yates over a virtual identity permutation
        swapped = {}
        out = np.empty(self.tau, dtype=np.int64)
        u = rng.random(self.tau)
        for k in range(self.tau):
            j = k + min(int(u[k] * (m - k)), m - k - 1)
            out[k] = swapped.get(j, j)
            swapped[j] = swapped.get(k, k)
        out.sort()
        return out

    def support(self, m):
        count = math.comb(m, self.tau)
        if count > ENUMERATION_LIMIT:
            raise UnsupportedClosedFormError(
                f"C({m},{self.tau}) = {count} subsets is too many to enumerate"
            )
        p = 1.0 / count
        return [(np.array(c), p) for c in combinations(range(m), self.tau)]


@dataclass(frozen=True, eq=False)
class FixedSets(SketchDistribution):
    """One of a listed family of index sets, chosen with given probabilities."""

    sets: tuple
    probabilities: np.ndarray

    def __post_init__(self):
        sets = tuple(np.unique(np.asarray(s, dtype=np.int64)) for s in self.sets)
        if not sets or any(s.size == 0 for s in sets):
            raise InvalidInputError("index sets must be nonempty")
        p = _check_probabilities(self.probabilities)
        if p.size != len(sets):
            raise InvalidInputError("one probability per set required")
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "_cdf", np.cumsum(p))

    @classmethod
    def uniform(cls, sets):
        return cls(tuple(sets), np.full(len(sets), 1.0 / len(sets)))

    def validate(self, system):
        for s in self.sets:
            if s.min() < 0 or s.max() >= system.m:
                raise InvalidInputError("index set out of range")

    def draw(self, m, rng):
        return self.sets[int(_sample_cdf(self._cdf, rng))]

    def support(self, m):
        return [(s, float(p)) for s, p in zip(self.sets, self.probabilities) if p > 0]


@dataclass(frozen=True)
class GaussianVector(SketchDistribution):
    """S ~ N(0, I_m), a single column."""

    finite_support = False

    def draw(self, m, rng):
        return rng.standard_normal(m)

    def support(self, m):
        raise UnsupportedClosedFormError("Gaussian sketches have no finite support")


def is_index_sketch(S):
    return S.dtype.kind in "iu"


def sketch_solve(system, S, x, rhs=None):
    """Solve the sketched subproblem at ``x``.

    Returns ``(lam, M, d)`` with ``M = S^T A B^{-1} A^T S``,
    ``d = S^T (b - A x)`` and ``lam = M^+ d`` (least-norm).  ``rhs`` may
    override ``d``.
    """
    if is_index_sketch(S):
        M, M_pinv = index_block(system, S)
        d = system.b[S] - system.A[S] @ x if rhs is None else rhs
        return M_pinv @ d, M, d
    AtS = system.A.T @ S
    M = np.array([[float(AtS @ system.B.solve(AtS))]])
    d = np.array([float(S @ (system.b - system.A @ x))]) if rhs is None else rhs
    return pseudoinverse(M) @ d, M, d


BLOCK_CACHE_SIZE = 4096


def index_block(system, S):
    """``(M, M^+)`` for an index sketch, cached per system (read-only arrays)."""
    cache = system._cache.setdefault("blocks", {})
    key = S.tobytes()
    hit = cache.get(key)
    if hit is None:
        M = system.gram[np.ix_(S, S)]
        M_pinv = pseudoinverse(M)
        M.setflags(write=False)
        M_pinv.setflags(write=False)
        hit = (M, M_pinv)
        if len(cache) < BLOCK_CACHE_SIZE:
            cache[key] = hit
    return hit


def lift(system, S, lam):
    """B^{-1} A^T S lam."""
    if is_index_sketch(S):
        return system.BinvAt[:, S] @ lam
    return system.B.solve(system.A.T @ (S * float(lam[0])))


def sketch_gradient(system, S, x):
    """Gradient of f_S in the B-geometry: B^{-1}A^T S M^+ S^T(Ax - b)."""
    if is_index_sketch(S) and S.size == 1:
        i = int(S[0])
        cols, vals, dcols, dvals, norm2 = system.rows()[i]
        r = float(np.dot(vals, x[cols])) - system.b[i]
        g = np.zeros(system.n)
        g[dcols] = (r / norm2) * dvals
        return g
    lam, _, _ = sketch_solve(system, S, x)
    return -lift(system, S, lam)


def f_S(system, S, x):
    """f_S(x) = 1/2 (Ax-b)^T S M^+ S^T (Ax-b)."""
    lam, _, d = sketch_solve(system, S, x)
    return 0.5 * float(np.dot(d, lam))


def Z_matrix(system, S):
    """Z = A^T S (S^T A B^{-1} A^T S)^+ S^T A."""
    if is_index_sketch(S):
        SA = system.A[S]
        M = system.gram[np.ix_(S, S)]
    else:
        SA = (S @ system.A).reshape(1, -1)
        M = SA @ system.B.solve(SA.T)
    return SA.T @ pseudoinverse(M) @ SA


def expected_Z(system, dist):
    """Closed-form E[Z] by enumerating the finite support."""
    if not dist.finite_support:
        raise UnsupportedClosedFormError(
            "E[Z] has no closed form for continuous sketches; use estimate_EZ"
        )
    EZ = np.zeros((system.n, system.n))
    for S, p in dist.support(system.m):
        EZ += p * Z_matrix(system, S)
    return EZ


def estimate_EZ(system, dist, samples, seed):
    """Monte-Carlo average of Z over ``samples`` draws; deterministic in ``seed``."""
    if int(samples) < 1:
        raise InvalidInputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = int(samples)
    EZ = np.zeros((system.n, system.n))
    counts = {}
    for _ in range(n):
        S = dist.draw(system.m, rng)
        if is_index_sketch(S):
            key = tuple(S.tolist())
            counts[key] = counts.get(key, 0) + 1
        else:
            EZ += Z_matrix(system, S) / n
    # repeated index sketches are weighted by their frequency
    for key, c in counts.items():
        EZ += (c / n) * Z_matrix(system, np.array(key, dtype=np.int64))
    return EZ


def W_matrix(system, dist, EZ=None):
    """W = B^{-1/2} E[Z] B^{-1/2}."""
    EZ = expected_Z(system, dist) if EZ is None else EZ
    R = system.B.inv_sqrt()
    return R @ EZ @ R


def spectrum_of_W(system, dist):
    """Spectrum of W for a finite-support distribution."""
    return Spectrum.of(W_matrix(system, dist))


def exactness_holds(system, dist, tol=1e-8, EZ=None):
    """True when Null(E[Z]) = Null(A), compared by rank and mutual containment."""
    EZ = expected_Z(system, dist) if EZ is None else EZ
    NA = null_basis(system.A, tol)
    NZ = null_basis(EZ, tol)
    if NA.shape[1] != NZ.shape[1]:
        return False
    if NA.shape[1] == 0:
        return True
    return bool(
        np.linalg.norm(system.A @ NZ) <= tol * max(1.0, np.linalg.norm(system.A))
        and np.linalg.norm(EZ @ NA) <= tol * max(1.0, np.linalg.norm(EZ))
    )
