"""Heavy-ball momentum, stochastic momentum and accelerated Kaczmarz (AccRK)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, RateUndefinedError, UnsupportedGeometryError
from .linalg import Spectrum, as_vector, pseudoinverse, range_basis
from .solver import SolverState, sketch_update
from .streams import as_rng

# ---------------------------------------------------------------- heavy ball


def momentum_step(state, system, dist, omega, beta):
    """x+ = x - omega grad f_S(x) + beta (x - x_prev)."""
    S = dist.draw(system.m, state.rng)
    x = state.x_curr
    x_new = sketch_update(system, S, x, omega)
    if beta != 0.0:
        x_new = x_new + beta * (x - state.x_prev)
    return SolverState(x_new, x, state.iteration + 1, state.rng, S)


def admissible_beta_bound(lmin, lmax, omega=1.0, n_factor=1.0):
    """Supremum of admissible momentum parameters.

    With ``n_factor = n`` this is the bound on gamma for stochastic momentum.
    """
    w = omega
    c = 4.0 - w * lmin + w * lmax
    return (-c + math.sqrt(c * c + 16.0 * n_factor * w * (2.0 - w) * lmin)) / 8.0


@dataclass(frozen=True)
class MomentumRate:
    """Constants of the L2 bound ``E||x^k - x*||^2 <= q^k (1 + delta) ||x^0 - x*||^2``."""

    a1: float
    a2: float
    q: float
    delta: float

    def bound(self, k):
        return self.q ** np.asarray(k) * (1.0 + self.delta)


def _rate_from(a1, a2):
    q = (a1 + math.sqrt(a1 * a1 + 4.0 * a2)) / 2.0
    return MomentumRate(a1, a2, q, q - a1)


def momentum_rate(spectrum, omega, beta):
    lmin, lmax = spectrum.lambda_min_plus, spectrum.lambda_max
    if beta < 0:
        raise InvalidParameterError("beta must be nonnegative")
    a1 = 1 + 3 * beta + 2 * beta ** 2 - (omega * (2 - omega) + omega * beta) * lmin
    a2 = beta + 2 * beta ** 2 + omega * beta * lmax
    if a1 + a2 >= 1:
        bound = admissible_beta_bound(lmin, lmax, omega)
        raise RateUndefinedError(
            f"beta={beta} is not admissible (a1 + a2 = {a1 + a2:.6g} >= 1); "
            f"admissible range is [0, {bound:.6g})", bound)
    return _rate_from(a1, a2)


def stochastic_momentum_rate(spectrum, omega, gamma, n):
    """Constants (a1bar, a2bar, qbar, deltabar) for stochastic momentum."""
    lmin, lmax = spectrum.lambda_min_plus, spectrum.lambda_max
    a1 = 1 + 3 * gamma / n + 2 * gamma ** 2 / n - (omega * (2 - omega) + omega * gamma / n) * lmin
    a2 = (gamma + 2 * gamma ** 2 + omega * gamma * lmax) / n
    if a1 + a2 >= 1:
        bound = admissible_beta_bound(lmin, lmax, omega, n_factor=n)
        raise RateUndefinedError(
            f"gamma={gamma} is not admissible (a1 + a2 = {a1 + a2:.6g} >= 1)", bound)
    return _rate_from(a1, a2)


def stochastic_momentum_step(state, system, dist, omega, gamma, rng):
    """Momentum applied along one coordinate ``i ~ U[n]`` drawn from ``rng``.

    x+ = x - omega grad f_S(x) + gamma (x_i - x_prev_i) e_i; requires B = I.
    """
    if not system.B.is_identity:
        raise UnsupportedGeometryError("stochastic momentum requires B = I")
    S = dist.draw(system.m, state.rng)
    x = state.x_curr
    x_new = sketch_update(system, S, x, omega)
    n = system.n
    i = min(int(rng.random() * n), n - 1)
    if gamma != 0.0:
        x_new[i] += gamma * (x[i] - state.x_prev[i])
    return SolverState(x_new, x, state.iteration + 1, state.rng, S)


@dataclass(frozen=True)
class ComplexityComparison:
    """Cost model of heavy-ball versus stochastic momentum."""

    ratio: float
    cost_momentum: float | None = None
    cost_stochastic: float | None = None

    @property
    def model_ratio(self):
        if self.cost_momentum is None:
            return None
        return self.cost_momentum / self.cost_stochastic


def smc_vs_mc_complexity(n, g, beta, spectrum=None, omega=1.0):
    """Predicted speedup ``1 + n/g`` and, given a spectrum, both total costs.

    ``C_m = (g + n) / (1 - q(beta))`` and ``C_s = g / (1 - qbar(beta n))``.
    """
    if g < 1:
        raise InvalidParameterError("g must be >= 1")
    ratio = 1.0 + n / g
    if spectrum is None:
        return ComplexityComparison(ratio)
    q = momentum_rate(spectrum, omega, beta).q
    qbar = stochastic_momentum_rate(spectrum, omega, beta * n, n).q
    return ComplexityComparison(ratio, (g + n) / (1 - q), g / (1 - qbar))


def operation_count(nnz, n, variant):
    """Floating-point operations of one single-row step (per-variant table)."""
    base = 4 * nnz
    if variant == "basic":
        return base
    if variant == "momentum":
        return base + 3 * n
    if variant == "stochastic-momentum":
        return base + 1
    raise InvalidParameterError(f"no operation count for {variant!r}")


def cesaro_average(iterates):
    """Mean of the iterates x^1..x^k (rows of ``iterates``)."""
    X = np.atleast_2d(np.asarray(iterates, dtype=float))
    if X.shape[0] < 1:
        raise InvalidParameterError("need at least one iterate")
    return X.mean(axis=0)


def cesaro_bound(omega, beta, dist0_sq, f0):
    """Bound on k * E[f(xhat^k)]; needs omega + 2 beta < 2."""
    if not omega + 2 * beta < 2:
        raise InvalidParameterError("Cesaro bound needs omega + 2*beta < 2")
    return ((1 - beta) ** 2 * dist0_sq + 2 * omega * beta * f0) / (
        2 * omega * (2 - 2 * beta - omega))


# ---------------------------------------------------------------- AccRK


@dataclass(frozen=True)
class AccParams:
    """AccRK parameters.

    Option 2 stores constant ``alpha, beta, gamma``; Option 1 stores
    ``lam`` and regenerates the sequences from ``gamma_{k-1}`` each step.
    """

    option: int
    m: int
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    lam: float = 0.0
    nu: float = 0.0

    def at(self, gamma_prev):
        """``(alpha_k, beta_k, gamma_k)`` given ``gamma_{k-1}``."""
        if self.option == 2:
            return self.alpha, self.beta, self.gamma
        m, lam = self.m, self.lam
        g = option_one_gamma(gamma_prev, m, lam)
        alpha = (m - g * lam) / (g * (m * m - lam))
        return alpha, 1.0 - g * lam / m, g


def option_one_gamma(gamma_prev, m, lam):
    """Larger root of g^2 - g/m = (1 - g lam/m) gamma_prev^2."""
    b = (lam * gamma_prev ** 2 - 1.0) / m
    c = -gamma_prev ** 2
    disc = math.sqrt(b * b - 4.0 * c)
    if b <= 0:
        return (-b + disc) / 2.0
    return (2.0 * -c) / (b + disc)


def acc_params(option, m, value, spectrum):
    """Build AccRK parameters.

    ``spectrum`` is that of W = A^T A / m for a row-normalised A.  For
    Option 1 ``value`` is lambda in [0, lambda_min_plus(A^T A)]; for Option 2
    it is nu in [1, min(m, 1/lambda_min_plus(W))].
    """
    lw = spectrum.lambda_min_plus
    tol = 1e-9
    if option == 1:
        lam = float(value)
        if not -tol <= lam <= m * lw * (1 + tol):
            raise InvalidParameterError(f"lambda={lam} outside [0, {m * lw:.6g}]")
        return AccParams(1, m, lam=max(lam, 0.0))
    if option == 2:
        nu = float(value)
        upper = min(m, 1.0 / lw)
        if not 1 - tol <= nu <= upper * (1 + tol):
            raise InvalidParameterError(f"nu={nu} outside [1, {upper:.6g}]")
        beta = 1.0 - math.sqrt(lw / nu)
        gamma = math.sqrt(1.0 / (lw * nu))
        return AccParams(2, m, alpha=1.0 / (1.0 + gamma * nu), beta=beta,
                         gamma=gamma, nu=nu)
    raise InvalidParameterError("option must be 1 or 2")


def acc_spectrum(system):
    """Spectrum of A^T A / m for the row-normalised matrix."""
    A = system.normalized().A
    return Spectrum.of(A.T @ A / A.shape[0])


def acc_params_for(system, config):
    """Parameters from a :class:`SolverConfig` (default: Option 2, nu = min(m, 1/lambda_min_plus(W)))."""
    if not system.B.is_identity:
        raise UnsupportedGeometryError("AccRK requires B = I")
    spec = acc_spectrum(system)
    m = system.m
    if config.acc_option == 1:
        lam = m * spec.lambda_min_plus if config.acc_lambda is None else config.acc_lambda
        return acc_params(1, m, lam, spec)
    nu = min(m, 1.0 / spec.lambda_min_plus) if config.acc_nu is None else config.acc_nu
    return acc_params(2, m, nu, spec)


def nu_exact(system):
    """The tight nu: largest generalised eigenvalue on Range(A^T)."""
    A = system.normalized().A
    m = A.shape[0]
    G = A.T @ A
    Gp = pseudoinverse(G)
    N = np.zeros_like(G)
    for a in A:
        N += float(a @ Gp @ a) * np.outer(a, a)
    U = range_basis(A.T)
    Gr = U.T @ G @ U / m
    vals, vecs = np.linalg.eigh(Gr)
    R = (vecs / np.sqrt(vals)) @ vecs.T
    return float(np.linalg.eigvalsh(R @ (U.T @ N @ U) @ R)[-1])


@dataclass
class AccState:
    """Iterates x, auxiliary y and v, and gamma_{k-1} for Option 1."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    gamma_prev: float
    iteration: int
    rng: np.random.Generator
    last_row: int = -1

    @classmethod
    def start(cls, x0, rng=None):
        x0 = as_vector(x0, name="x0").copy()
        return cls(x0, x0.copy(), x0.copy(), 0.0, 0, as_rng(rng))


def acc_row_update(y, v, cols, vals, b_i, alpha_beta_gamma):
    """Shared arithmetic for one accelerated row update (unit-norm row)."""
    _, beta, gamma = alpha_beta_gamma
    r = float(np.dot(vals, y[cols])) - b_i
    x_new = y.copy()
    x_new[cols] -= r * vals
    v_new = beta * v + (1.0 - beta) * y
    v_new[cols] -= (gamma * r) * vals
    return x_new, v_new


def acc_step(state, system, params):
    """One AccRK iteration with a uniformly sampled row.

    ``system`` must have unit-norm rows (see :meth:`LinearSystem.normalized`).
    """
    m = system.m
    i = min(int(state.rng.random() * m), m - 1)
    abg = params.at(state.gamma_prev)
    alpha = abg[0]
    y = alpha * state.v + (1.0 - alpha) * state.x
    cols, vals, _, _, _ = system.rows()[i]
    x_new, v_new = acc_row_update(y, state.v, cols, vals, system.b[i], abg)
    return AccState(x_new, y, v_new, abg[2], state.iteration + 1, state.rng, i)
