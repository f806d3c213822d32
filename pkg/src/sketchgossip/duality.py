"""Dual of the best-approximation problem and stochastic dual subspace ascent.

D(y) = (b - A x0)^T y - 1/2 ||A^T y||^2_{B^{-1}} is maximised over y; the
affine map phi(y) = x0 + B^{-1} A^T y sends dual iterates to primal ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_vector, pseudoinverse
from .sketches import is_index_sketch, sketch_solve
from .streams import as_rng


@dataclass
class DualState:
    """Dual iterates y^k, y^{k-1}; both start at 0."""

    y_curr: np.ndarray
    y_prev: np.ndarray
    x0: np.ndarray
    iteration: int
    rng: np.random.Generator
    last_sketch: np.ndarray | None = None
    info: dict | None = None

    @classmethod
    def start(cls, system, x0, rng=None):
        x0 = as_vector(x0, system.n, "x0").copy()
        return cls(np.zeros(system.m), np.zeros(system.m), x0, 0, as_rng(rng))


def dual_value(system, x0, y):
    y = np.asarray(y, dtype=float)
    Aty = system.A.T @ y
    return float((system.b - system.A @ x0) @ y - 0.5 * Aty @ system.B.solve(Aty))


def primal_from_dual(system, x0, y):
    """phi(y) = x0 + B^{-1} A^T y."""
    return x0 + system.BinvAt @ np.asarray(y, dtype=float)


def dual_optimum(system, x0):
    """Least-norm maximiser y* = (A B^{-1} A^T)^+ (b - A x0)."""
    return pseudoinverse(system.gram) @ (system.b - system.A @ x0)


def dual_suboptimality(system, x0, y, y_star=None):
    y_star = dual_optimum(system, x0) if y_star is None else y_star
    return dual_value(system, x0, y_star) - dual_value(system, x0, y)


def dual_direction(system, S, x0, y):
    """S lambda with lambda = M^+ S^T (b - A phi(y)); also returns the solve data."""
    x = primal_from_dual(system, x0, y)
    lam, M, d = sketch_solve(system, S, x)
    return embed(system, S, lam), lam, M, d


def embed(system, S, lam):
    """The m-vector S lam."""
    if is_index_sketch(S):
        out = np.zeros(system.m)
        out[S] = lam
        return out
    return S * float(lam[0])


def sdsa_step(state, system, dist, omega):
    """y+ = y + omega S lambda."""
    return msdsa_step(state, system, dist, omega, 0.0)


def msdsa_step(state, system, dist, omega, beta):
    """y+ = y + omega S lambda + beta (y - y_prev)."""
    S = dist.draw(system.m, state.rng)
    step, _, _, _ = dual_direction(system, S, state.x0, state.y_curr)
    y = state.y_curr
    y_new = y + omega * step
    if beta != 0.0:
        y_new = y_new + beta * (y - state.y_prev)
    return DualState(y_new, y, state.x0, state.iteration + 1, state.rng, S)
