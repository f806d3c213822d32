"""The basic sketch-and-project method, rate prediction and run driver."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (ExactnessWarning, InvalidInputError, InvalidParameterError,
                     UnsupportedClosedFormError)
from .linalg import as_vector
from .sketches import Coordinate, exactness_holds, expected_Z, is_index_sketch, sketch_gradient
from .streams import as_rng, trial_rng
from .trace import Trace

CHUNK = 65536

VARIANTS = ("basic", "momentum", "stochastic-momentum", "accelerated", "inexact", "dual")


@dataclass
class SolverState:
    """Iterate pair, counter and the run's random stream.

    ``x_prev`` equals ``x_curr`` at iteration 0 so that momentum methods
    start from ``x^0 = x^1``.
    """

    x_curr: np.ndarray
    x_prev: np.ndarray
    iteration: int
    rng: np.random.Generator
    last_sketch: np.ndarray | None = None
    info: dict | None = None

    @classmethod
    def start(cls, x0, rng=None):
        x0 = as_vector(x0, name="x0").copy()
        return cls(x0, x0.copy(), 0, as_rng(rng))


def _warn_omega(omega):
    if not 0.0 < omega < 2.0:
        warnings.warn(f"relaxation omega={omega} outside (0, 2): no convergence guarantee",
                      RuntimeWarning, stacklevel=3)


def sketch_update(system, S, x, omega):
    """x - omega * grad f_S(x) with a sparse fast path for single rows."""
    if is_index_sketch(S) and S.size == 1:
        i = int(S[0])
        cols, vals, dcols, dvals, norm2 = system.rows()[i]
        r = float(np.dot(vals, x[cols])) - system.b[i]
        out = x.copy()
        out[dcols] -= (omega * (r / norm2)) * dvals
        return out
    return x - omega * sketch_gradient(system, S, x)


def basic_step(state, system, dist, omega):
    """One relaxed sketch-and-project step with a fresh sketch."""
    _warn_omega(omega)
    S = dist.draw(system.m, state.rng)
    x_new = sketch_update(system, S, state.x_curr, omega)
    return SolverState(x_new, state.x_curr, state.iteration + 1, state.rng, S)


@dataclass(frozen=True)
class RatePrediction:
    """Linear rate ``rho = 1 - omega(2 - omega) lambda_min_plus``."""

    rho: float
    omega: float
    lambda_min_plus: float

    def iteration_bound(self, eps):
        """Smallest k with rho^k <= eps, i.e. ceil(log(1/eps) / (1 - rho))."""
        if not 0 < eps < 1:
            raise InvalidParameterError("eps must lie in (0, 1)")
        if self.rho >= 1:
            return math.inf
        return math.ceil(math.log(1.0 / eps) / (1.0 - self.rho))


def predicted_rate(spectrum, omega=1.0):
    if not 0.0 < omega < 2.0:
        raise InvalidParameterError(f"omega={omega} must lie in (0, 2)")
    lam = spectrum.lambda_min_plus
    rho = min(max(1.0 - omega * (2.0 - omega) * lam, 0.0), 1.0)
    return RatePrediction(rho, omega, lam)


@dataclass(frozen=True)
class Stopping:
    max_iters: int = 1000
    target: float | None = None


@dataclass(frozen=True)
class SolverConfig:
    """Variant tag and its parameters.

    ``inexact`` holds an :class:`~sketchgossip.inexact.InexactnessSpec`;
    ``acc_option``/``acc_lambda``/``acc_nu`` configure the accelerated run.
    """

    variant: str = "basic"
    omega: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    acc_option: int = 2
    acc_lambda: float | None = None
    acc_nu: float | None = None
    inexact: object = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameterError(f"unknown variant {self.variant!r}")


def _closed_form_EZ(system, dist):
    try:
        return expected_Z(system, dist)
    except UnsupportedClosedFormError:
        return None


def check_exactness(system, dist, EZ=None):
    """Warn (and return False) when the distribution is not exact for the system."""
    EZ = _closed_form_EZ(system, dist) if EZ is None else EZ
    if EZ is None or exactness_holds(system, dist, EZ=EZ):
        return True
    warnings.warn("Null(E[Z]) differs from Null(A): the sketch distribution is not exact",
                  ExactnessWarning, stacklevel=3)
    return False


def run(system, dist, config=None, x0=None, stopping=Stopping(), hooks=None,
        seed=0, trial=0, metrics=("rel_error",), record_every=1):
    """Iterate the configured variant and record metrics.

    Records ``rel_error`` (||x^k - x*||_B^2 / ||x^0 - x*||_B^2), ``f`` when
    E[Z] has a closed form, and any ``hooks`` (``name -> fn(x, k)``).
    Stops at ``stopping.max_iters`` or once ``rel_error <= stopping.target``.
    """
    from . import duality, inexact, momentum

    config = config or SolverConfig()
    dist.validate(system)
    x0 = np.zeros(system.n) if x0 is None else as_vector(x0, system.n, "x0")
    x_star = system.project(x0)
    denom = system.B.norm_sq(x0 - x_star)
    small = system.n * system.m <= 250_000
    EZ = _closed_form_EZ(system, dist) if small or "f" in metrics else None
    if EZ is not None:
        check_exactness(system, dist, EZ)
    f_fn = None
    if "f" in metrics and EZ is not None:
        f_fn = lambda x: 0.5 * float((x - x_star) @ EZ @ (x - x_star))
    hooks = dict(hooks or {})
    rng = trial_rng(seed, trial)
    trace = Trace()

    def record(k, x):
        rel = system.B.norm_sq(x - x_star) / denom if denom > 0 else 0.0
        if not np.isfinite(rel):
            raise FloatingPointError(f"iterate diverged at iteration {k}")
        if "rel_error" in metrics:
            trace.add(trial, k, "rel_error", rel)
        if f_fn is not None:
            trace.add(trial, k, "f", f_fn(x))
        for name, fn in hooks.items():
            trace.add(trial, k, name, fn(x, k))
        return rel

    v = config.variant
    if v == "accelerated":
        params = momentum.acc_params_for(system, config)
        st = momentum.AccState.start(x0, rng)
        work = system.normalized()
        get_x = lambda s: s.x
        step = lambda s: momentum.acc_step(s, work, params)
    elif v == "dual":
        st = duality.DualState.start(system, x0, rng)
        get_x = lambda s: duality.primal_from_dual(system, s.x0, s.y_curr)
        if config.beta == 0.0:
            step = lambda s: duality.sdsa_step(s, system, dist, config.omega)
        else:
            step = lambda s: duality.msdsa_step(s, system, dist, config.omega, config.beta)
    else:
        st = SolverState.start(x0, rng)
        get_x = lambda s: s.x_curr
        if v == "basic":
            step = lambda s: basic_step(s, system, dist, config.omega)
        elif v == "momentum":
            step = lambda s: momentum.momentum_step(s, system, dist, config.omega, config.beta)
        elif v == "stochastic-momentum":
            rng2 = trial_rng(seed, trial, 1)
            step = lambda s: momentum.stochastic_momentum_step(
                s, system, dist, config.omega, config.gamma, rng2)
        else:
            if config.inexact is None:
                raise InvalidParameterError("inexact variant needs an inexactness spec")
            spec = config.inexact
            if spec.variant == "norm" and spec.x_star is None:
                spec = spec.with_solution(x_star)
            step = lambda s: inexact.ibasic_step(s, system, dist, config.omega, spec)

    rel = record(0, x0)
    for k in range(1, stopping.max_iters + 1):
        if stopping.target is not None and rel <= stopping.target:
            break
        st = step(st)
        x = get_x(st)
        if k % record_every == 0 or k == stopping.max_iters:
            rel = record(k, x)
        elif stopping.target is not None:
            rel = system.B.norm_sq(x - x_star) / denom if denom > 0 else 0.0
            if not math.isfinite(rel):
                raise FloatingPointError(f"iterate diverged at iteration {k}")
            if rel <= stopping.target:
                record(k, x)
    return trace


def run_batch(system, dist, x0, trials, iters, seed=0, omega=1.0, beta=0.0,
              record_every=1, target=None, gamma=0.0):
    """Vectorised multi-trial run of the single-row method.

    ``beta`` adds heavy-ball momentum; ``gamma`` adds stochastic momentum
    along one coordinate per step (requires B = I).  Trial ``t`` uses the
    same random streams as :func:`run` with ``trial=t``; iterates agree with
    it up to floating-point reordering.  Returns a :class:`Trace` of
    ``rel_error``.
    """
    if not isinstance(dist, Coordinate):
        raise InvalidInputError("run_batch supports coordinate sketches only")
    if gamma and not system.B.is_identity:
        raise InvalidInputError("stochastic momentum requires B = I")
    dist.validate(system)
    _warn_omega(omega)
    n = system.n
    x0 = np.zeros(n) if x0 is None else as_vector(x0, n, "x0")
    x_star = system.project(x0)
    norms = system.row_norms_sq()
    D = system.BinvAt.T
    rngs = [trial_rng(seed, t) for t in range(trials)]
    coord_rngs = [trial_rng(seed, t, 1) for t in range(trials)] if gamma else None
    # finished trials are dropped, so every array below holds live trials only
    live = np.arange(trials)
    X = np.tile(x0, (trials, 1))
    Xp = X.copy()
    recs = []
    B_eye = system.B.is_identity

    def sq_of(X):
        E = X - x_star
        if B_eye:
            return np.einsum("ij,ij->i", E, E)
        return np.einsum("ij,ij->i", E, system.B.matvec(E.T).T)

    # same arithmetic as the numerator, so the first record is exactly 1
    denom = float(sq_of(x0[None, :])[0])
    scale = 1.0 / denom if denom > 0 else 0.0

    def chunk(k):
        # consecutive draws from each stream, identical to one-at-a-time draws
        size = min(CHUNK, iters - k + 1)
        idx = np.stack([dist.draw_many(r, size) for r in rngs])
        if not gamma:
            return idx, None
        cols = np.stack([np.minimum((r.random(size) * n).astype(np.int64), n - 1)
                         for r in coord_rngs])
        return idx, cols

    A, b = system.A, system.b
    coef = omega / norms
    rel = sq_of(X) * scale
    recs.append((0, live, rel))
    if target is not None:
        keep = rel > target
        live, X, Xp = live[keep], X[keep], Xp[keep]
    base = 1
    idx = cols = None
    for k in range(1, iters + 1):
        if live.size == 0:
            break
        if idx is None or k - base >= idx.shape[1]:
            base = k
            idx, cols = chunk(k)
        i = idx[live, k - base]
        Xn = X - ((np.einsum("ij,ij->i", A[i], X) - b[i]) * coef[i])[:, None] * D[i]
        if beta:
            Xn += beta * (X - Xp)
        if gamma:
            c = cols[live, k - base]
            rows = np.arange(live.size)
            Xn[rows, c] += gamma * (X[rows, c] - Xp[rows, c])
        Xp, X = X, Xn
        due = k % record_every == 0 or k == iters
        if due or target is not None:
            rel = sq_of(X) * scale
            if (due or k % 1024 == 0) and not np.all(np.isfinite(rel)):
                raise FloatingPointError(f"iterate diverged at iteration {k}")
            if due:
                recs.append((k, live, rel))
            if target is not None and rel.min() <= target:
                if not due:
                    hit = rel <= target
                    recs.append((k, live[hit], rel[hit]))
                keep = rel > target
                live, X, Xp = live[keep], X[keep], Xp[keep]
    per_trial = [[] for _ in range(trials)]
    for k, ids, vals in recs:
        for t, v in zip(ids.tolist(), vals.tolist()):
            per_trial[t].append((k, v))
    trace = Trace()
    for t in range(trials):
        for k, v in per_trial[t]:
            trace.add(t, k, "rel_error", v)
    return trace
