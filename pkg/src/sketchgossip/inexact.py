"""Inexact sketch-and-project (iBasic) and its dual counterpart (iSDSA).

Errors are either injected abstractly, with a norm set by a schedule or
proportional to the current suboptimality, or arise from solving the
inner system ``M lam = d`` approximately with CG or inner sketch-and-project.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .duality import DualState, embed, primal_from_dual
from .errors import InvalidParameterError, PositiveDefinitenessError
from .linalg import Spectrum
from .sketches import BLOCK_CACHE_SIZE, f_S, is_index_sketch, lift, sketch_solve
from .solver import SolverState

ABSTRACT = ("bounded", "norm", "function")
INNER = ("cg", "sp")


@dataclass(frozen=True)
class InexactnessSpec:
    """How the error of each step is produced.

    ``variant`` is one of ``bounded`` (sigma_k from ``sigma``: a constant or
    ``("geometric", a, ratio)``), ``norm`` (sigma_k = q ||x^k - x*||_B),
    ``function`` (sigma_k = q ||grad f_S(x^k)||_B) or ``structured``
    (inner solver ``inner`` run for ``r`` iterations from zero).
    """

    variant: str
    q: float = 0.0
    sigma: object = 0.0
    inner: str = "cg"
    r: int = 1
    x_star: np.ndarray | None = None

    @classmethod
    def bounded(cls, sigma):
        return cls("bounded", sigma=sigma)

    @classmethod
    def norm_proportional(cls, q, x_star=None, rho=None):
        if q < 0 or (rho is not None and not q < 1 - math.sqrt(rho)):
            raise InvalidParameterError("need 0 <= q < 1 - sqrt(rho)")
        return cls("norm", q=q, x_star=x_star)

    @classmethod
    def function_proportional(cls, q, omega=1.0):
        if not 0 < q < math.sqrt(omega * (2 - omega)):
            raise InvalidParameterError("need 0 < q < sqrt(omega (2 - omega))")
        return cls("function", q=q)

    @classmethod
    def structured(cls, inner, r):
        if inner not in INNER:
            raise InvalidParameterError(f"inner solver must be one of {INNER}")
        if int(r) < 0:
            raise InvalidParameterError("r must be nonnegative")
        return cls("structured", inner=inner, r=int(r))

    def with_solution(self, x_star):
        return replace(self, x_star=np.asarray(x_star, dtype=float))

    def sigma_at(self, k):
        s = self.sigma
        if isinstance(s, (tuple, list)) and s and s[0] == "geometric":
            return float(s[1]) * float(s[2]) ** k
        return float(s)


def inner_cg(M, d, r, tol=1e-12, eig=None):
    """``r`` conjugate-gradient iterations on ``M lam = d`` from ``lam = 0``.

    ``eig`` may carry precomputed ascending eigenvalues of ``M``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    eig = np.linalg.eigvalsh(M) if eig is None else eig
    if eig[0] <= tol * max(eig[-1], 0.0) or eig[-1] <= 0:
        raise PositiveDefinitenessError(
            "inner matrix is singular; use the inner sketch-and-project solver")
    lam = np.zeros_like(d)
    res = d.copy()
    p = res.copy()
    rr = float(res @ res)
    for _ in range(int(r)):
        if rr == 0.0:
            break
        Mp = M @ p
        a = rr / float(p @ Mp)
        lam = lam + a * p
        res = res - a * Mp
        rr_new = float(res @ res)
        p = res + (rr_new / rr) * p
        rr = rr_new
    return lam


def inner_sketch_project(M, d, r, rng):
    """``r`` randomized Kaczmarz steps on ``M lam = d`` from ``lam = 0``.

    Rows are sampled with probability proportional to their squared norm.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    lam = np.zeros_like(d)
    norms = np.einsum("ij,ij->i", M, M)
    total = norms.sum()
    if total == 0 or r == 0:
        return lam
    cdf = np.cumsum(norms / total)
    for _ in range(int(r)):
        i = min(int(np.searchsorted(cdf, rng.random(), side="right")), d.size - 1)
        lam = lam - ((M[i] @ lam - d[i]) / norms[i]) * M[i]
    return lam


def cg_contraction(M):
    """((sqrt(kappa) - 1) / (sqrt(kappa) + 1))^4 for SPD ``M``."""
    eig = np.linalg.eigvalsh(M)
    if eig[0] <= 0:
        raise PositiveDefinitenessError("CG contraction needs a positive definite matrix")
    s = math.sqrt(eig[-1] / eig[0])
    return ((s - 1) / (s + 1)) ** 4


def sp_contraction(M):
    """1 - lambda_min_plus(M^T M / ||M||_F^2) for inner Kaczmarz."""
    M = np.atleast_2d(M)
    return 1.0 - Spectrum.of(M.T @ M / np.sum(M * M)).lambda_min_plus


def theta_for(system, dist, inner):
    """Worst inner contraction over the support of ``dist``."""
    fn = cg_contraction if inner == "cg" else sp_contraction
    worst = 0.0
    for S, _ in dist.support(system.m):
        M = system.gram[np.ix_(S, S)]
        worst = max(worst, fn(M))
    return worst


def structured_rate(spectrum, theta, r):
    """1 - (1 - theta^r) lambda_min_plus (unit stepsize)."""
    return 1.0 - (1.0 - theta ** r) * spectrum.lambda_min_plus


def _unit_b_direction(system, rng):
    g = rng.standard_normal(system.n)
    u = g / np.linalg.norm(g)
    return u if system.B.is_identity else system.B.inv_sqrt() @ u


def _inner(spec, M, d, rng, system=None, S=None):
    if spec.inner == "cg":
        eig = None
        if system is not None and is_index_sketch(S):
            cache = system._cache.setdefault("block_eigs", {})
            key = S.tobytes()
            eig = cache.get(key)
            if eig is None:
                eig = np.linalg.eigvalsh(M)
                if len(cache) < BLOCK_CACHE_SIZE:
                    cache[key] = eig
        return inner_cg(M, d, spec.r, eig=eig)
    return inner_sketch_project(M, d, spec.r, rng)


def _sigma(spec, system, S, x, k, omega):
    if spec.variant == "bounded":
        return spec.sigma_at(k)
    if spec.variant == "norm":
        if spec.x_star is None:
            raise InvalidParameterError("norm-proportional errors need x_star")
        return spec.q * system.B.norm(x - spec.x_star)
    if spec.variant == "function":
        return spec.q * math.sqrt(max(2.0 * f_S(system, S, x), 0.0))
    raise InvalidParameterError(f"unknown inexactness variant {spec.variant!r}")


def ibasic_step(state, system, dist, omega, spec, rng=None, error=None):
    """One inexact step; the sketch comes from ``state.rng``.

    For abstract variants the error is ``sigma_k`` times a direction uniform
    on the unit B-sphere drawn from ``rng`` (default ``state.rng``); an
    explicit ``error`` vector overrides it.  ``state.info`` records
    ``error`` and, for structured variants, ``lam_r`` and ``lam_star``.
    """
    rng = state.rng if rng is None else rng
    S = dist.draw(system.m, state.rng)
    x = state.x_curr
    lam_star, M, d = sketch_solve(system, S, x)
    if spec.variant == "structured":
        lam_r = _inner(spec, M, d, rng, system, S)
        x_new = x + omega * lift(system, S, lam_r)
        err = omega * lift(system, S, lam_r - lam_star)
        info = {"error": err, "lam_r": lam_r, "lam_star": lam_star, "M": M}
    else:
        exact = x + omega * lift(system, S, lam_star)
        if error is None:
            sigma = _sigma(spec, system, S, x, state.iteration, omega)
            error = sigma * _unit_b_direction(system, rng) if sigma > 0 else np.zeros(system.n)
        x_new = exact + error
        info = {"error": error}
    return SolverState(x_new, x, state.iteration + 1, state.rng, S, info)


def isdsa_step(state, system, dist, omega, spec, rng=None, error=None):
    """Inexact dual ascent step; primal error equals B^{-1} A^T times the dual error.

    Abstract dual errors ``eps_d`` are Gaussian directions in R^m scaled so
    that ||B^{-1} A^T eps_d||_B equals sigma_k; ``error`` overrides.
    ``state.info['error']`` holds ``eps_d``.
    """
    rng = state.rng if rng is None else rng
    S = dist.draw(system.m, state.rng)
    y = state.y_curr
    x = primal_from_dual(system, state.x0, y)
    lam_star, M, d = sketch_solve(system, S, x)
    if spec.variant == "structured":
        lam_r = _inner(spec, M, d, rng)
        y_new = y + omega * embed(system, S, lam_r)
        err = omega * embed(system, S, lam_r - lam_star)
    else:
        exact = y + omega * embed(system, S, lam_star)
        if error is None:
            sigma = _sigma(spec, system, S, x, state.iteration, omega)
            error = np.zeros(system.m)
            if sigma > 0:
                u = rng.standard_normal(system.m)
                Atu = system.A.T @ u
                scale = math.sqrt(float(Atu @ system.B.solve(Atu)))
                if scale > 0:
                    error = (sigma / scale) * u
        err = error
        y_new = exact + error
    return DualState(y_new, y, state.x0, state.iteration + 1, state.rng, S, {"error": err})


def structured_theta_rate(system, dist, spectrum, inner, r):
    """Rate bound of the structured variant with theta from the support."""
    return structured_rate(spectrum, theta_for(system, dist, inner), r)

