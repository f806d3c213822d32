"""Privacy-preserving gossip: binary oracle, epsilon-gap oracle, noise insertion.

All three are coordinate updates on the edge-valued dual variables of the
incidence consensus system; ``y`` is kept alongside the primal values so
that dual suboptimality can be reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .graphs import algebraic_connectivity
from .linalg import as_vector
from .sketches import Coordinate
from .streams import as_rng, trial_rng
from .trace import Trace

# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class StepsizeSchedule:
    """Stepsize rule lambda^t for the binary oracle.

    ``kind`` is ``constant`` (``value``), ``inv_t`` (1/(t+1)),
    ``inv_sqrt_t`` (``value``/sqrt(t+1)), ``optimal`` (sqrt(R/(k+1)) for a
    fixed ``horizon`` k) or ``adaptive`` ((1/2m) sum_e |x_i - x_j|).
    """

    kind: str
    value: float = 1.0
    R: float = 1.0
    horizon: int = 1

    KINDS = ("constant", "inv_t", "inv_sqrt_t", "optimal", "adaptive")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"unknown schedule {self.kind!r}")
        if self.kind in ("constant", "inv_sqrt_t") and self.value <= 0:
            raise InvalidParameterError("stepsize must be positive")

    @classmethod
    def constant(cls, lam):
        return cls("constant", value=lam)

    @classmethod
    def inv_t(cls):
        return cls("inv_t")

    @classmethod
    def inv_sqrt_t(cls, a):
        return cls("inv_sqrt_t", value=a)

    @classmethod
    def optimal(cls, R, horizon):
        return cls("optimal", R=R, horizon=horizon)

    @classmethod
    def adaptive(cls):
        return cls("adaptive")

    def at(self, t, gap_sum=None, m=None):
        if self.kind == "constant":
            return self.value
        if self.kind == "inv_t":
            return 1.0 / (t + 1)
        if self.kind == "inv_sqrt_t":
            return self.value / math.sqrt(t + 1)
        if self.kind == "optimal":
            return math.sqrt(self.R / (self.horizon + 1))
        return gap_sum / (2.0 * m)


def binary_rate_bound(schedule, k, R):
    """U^k = (R + sum_t lambda_t^2) / sum_t lambda_t over t = 0..k.

    ``R`` bounds D(y*) - D(y^0).  Closed forms: constant lambda gives
    R/(lambda(k+1)) + lambda; the optimal rule gives 2 sqrt(R/(k+1)).
    """
    if schedule.kind == "adaptive":
        raise InvalidParameterError("the adaptive rule has a linear rate, not U^k")
    if schedule.kind == "constant":
        lam = schedule.value
        return R / (lam * (k + 1)) + lam
    if schedule.kind == "optimal":
        if schedule.horizon != k:
            sched = schedule
            lam = sched.at(0)
            return R / (lam * (k + 1)) + lam
        return 2.0 * math.sqrt(R / (k + 1))
    lams = np.array([schedule.at(t) for t in range(k + 1)])
    return float((R + np.sum(lams ** 2)) / np.sum(lams))


def inv_sqrt_closed_form(a, k, R):
    """Upper estimate of U^k for lambda_t = a/sqrt(t+1)."""
    return (R + a * a * (math.log(k + 1.5) + math.log(2.0))) / (2.0 * a * (math.sqrt(k + 2) - 1.0))


# ---------------------------------------------------------------- measures


def consensus_error(x):
    """||cbar 1 - x||^2 with cbar the mean of x (mass is conserved)."""
    d = x - np.mean(x)
    return float(d @ d)


def edge_gaps(net, x):
    e = net.edge_array
    return x[e[:, 0]] - x[e[:, 1]]


def gap_sum(net, x):
    return float(np.sum(np.abs(edge_gaps(net, x))))


def L_measure(net, x):
    """(1/m) sum_e |x_i - x_j|."""
    return gap_sum(net, x) / net.m


def pairwise_spread(x):
    """(1/2n) sum_i sum_j (x_j - x_i)^2."""
    x = np.asarray(x, float)
    n = x.size
    return float(np.sum((x[:, None] - x[None, :]) ** 2) / (2 * n))


def delta_fraction(net, x, eps):
    """Fraction of edges whose gap is at least ``eps``."""
    return float(np.mean(np.abs(edge_gaps(net, x)) >= eps))


def dual_gap(net, c, y):
    """D(y*) - D(y) for the incidence system with x0 = c."""
    from .graphs import incidence
    Q = incidence(net)
    x = c + Q.T @ y
    Dy = float(-(Q @ c) @ y - 0.5 * np.sum((Q.T @ y) ** 2))
    d_star = 0.5 * consensus_error(c)
    return d_star - Dy, x


# ---------------------------------------------------------------- states and steps


@dataclass
class PrivacyState:
    """Primal values, dual edge values and the tick counter."""

    network: object
    x: np.ndarray
    y: np.ndarray
    c: np.ndarray
    rng: np.random.Generator
    clock: int = 0
    last: int = -1

    @classmethod
    def start(cls, network, c, rng=None):
        c = as_vector(c, network.n, "c").copy()
        return cls(network, c.copy(), np.zeros(network.m), c, as_rng(rng))


def _edge(state):
    net = state.network
    if "edge_dist" not in net._cache:
        net._cache["edge_dist"] = Coordinate.uniform(net.m)
    e = int(net._cache["edge_dist"].draw(net.m, state.rng)[0])
    return e, net.edges[e]


def binary_step(state, schedule):
    """Move the sampled endpoints toward each other by lambda^t using the sign only.

    If x_i < x_j: x_i += lam, x_j -= lam; otherwise (ties included) the reverse.
    """
    net = state.network
    lam = schedule.at(state.clock, gap_sum(net, state.x) if schedule.kind == "adaptive" else None, net.m)
    e, (i, j) = _edge(state)
    x, y = state.x.copy(), state.y.copy()
    s = 1.0 if x[i] < x[j] else -1.0
    x[i] += s * lam
    x[j] -= s * lam
    y[e] += s * lam
    return PrivacyState(net, x, y, state.c, state.rng, state.clock + 1, e)


def epsilon_gap_step(state, eps):
    """Move endpoints by eps/2 each when their gap is at least eps; otherwise idle."""
    if eps <= 0:
        raise InvalidParameterError("eps must be positive")
    net = state.network
    e, (i, j) = _edge(state)
    x, y = state.x.copy(), state.y.copy()
    h = eps / 2.0
    if x[i] <= x[j] - eps:
        x[i] += h
        x[j] -= h
        y[e] += h
    elif x[j] <= x[i] - eps:
        x[i] -= h
        x[j] += h
        y[e] -= h
    return PrivacyState(net, x, y, state.c, state.rng, state.clock + 1, e)


@dataclass
class NoiseState:
    """Per-node noise parameters and memory.

    ``last`` holds phi_i^{t_i - 1} v_i^{t_i - 1} (zero before the first firing).
    """

    sigma: np.ndarray
    phi: np.ndarray
    t: np.ndarray
    last: np.ndarray

    @classmethod
    def start(cls, sigma, phi):
        sigma = np.asarray(sigma, float)
        phi = np.broadcast_to(np.asarray(phi, float), sigma.shape).copy()
        if np.any(phi < 0) or np.any(phi >= 1):
            raise InvalidParameterError("decay rates must lie in [0, 1)")
        return cls(sigma, phi, np.zeros(sigma.size, dtype=np.int64), np.zeros(sigma.size))

    def copy(self):
        return NoiseState(self.sigma, self.phi, self.t.copy(), self.last.copy())


def _noise(noise, i, rng):
    v = noise.sigma[i] * rng.standard_normal()
    fresh = noise.phi[i] ** noise.t[i] * v
    w = fresh - noise.last[i]
    noise.last[i] = fresh
    noise.t[i] += 1
    return w


def noise_step(state, noise, rng=None):
    """Pairwise average of noise-perturbed values.

    Each endpoint adds w = phi^t v^t - phi^{t-1} v^{t-1} with fresh
    v^t ~ N(0, sigma^2); both receive (x_i + w_i + x_j + w_j)/2.  Returns
    ``(state, noise)``; inputs are not modified.
    """
    rng = state.rng if rng is None else rng
    net = state.network
    e, (i, j) = _edge(state)
    noise = noise.copy()
    wi = _noise(noise, i, rng)
    wj = _noise(noise, j, rng)
    x = state.x.copy()
    avg = (x[i] + wi + x[j] + wj) / 2.0
    x[i] = avg
    x[j] = avg
    return PrivacyState(net, x, state.y, state.c, state.rng, state.clock + 1, e), noise


def phi_threshold(net, gamma):
    """phi_i = sqrt(1 - gamma/d_i) and whether the rate is noise-dominated.

    Noise dominates when gamma < alpha(G)/2.
    """
    d = net.degrees.astype(float)
    if gamma > d.min() or gamma < 0:
        raise InvalidParameterError(f"gamma must lie in [0, d_min={d.min():g}]")
    phi = np.sqrt(1.0 - gamma / d)
    return phi, bool(gamma < algebraic_connectivity(net) / 2.0)


def noise_moment_prediction(net, phi, t):
    """E[phi_i^(2 t_i)] after t ticks: (1 - (d_i/m)(1 - phi_i^2))^t."""
    d = net.degrees.astype(float)
    return (1.0 - d / net.m * (1.0 - np.asarray(phi) ** 2)) ** t


def noise_rate_bound(net, gamma, sigma, k, d_gap0):
    """(1 - min(alpha/2m, gamma/m))^k (D* - D^0 + sum_i d_i sigma_i^2 k / (4m))."""
    alpha = algebraic_connectivity(net)
    m = net.m
    rate = 1.0 - min(alpha / (2 * m), gamma / m)
    extra = float(np.sum(net.degrees * np.asarray(sigma) ** 2)) * k / (4 * m)
    return rate ** k * (d_gap0 + extra)


def fire_counts(net, ticks, runs, rng):
    """Times each node is an endpoint after ``ticks`` uniform edge draws (runs x n)."""
    e = net.edge_array
    edges = rng.integers(0, net.m, size=(runs, ticks))
    counts = np.zeros((runs, net.n), dtype=np.int64)
    rows = np.repeat(np.arange(runs), ticks)
    np.add.at(counts, (rows, e[edges.ravel(), 0]), 1)
    np.add.at(counts, (rows, e[edges.ravel(), 1]), 1)
    return counts


# ---------------------------------------------------------------- simulation


def simulate_privacy(net, oracle, c, iterations, seed=0, trial=0, schedule=None, eps=None,
                     sigma=None, phi=None, record_every=1,
                     metrics=("consensus_error",)):
    """Run one privacy oracle and record metrics.

    ``oracle`` is ``binary`` (needs ``schedule``), ``gap`` (needs ``eps``) or
    ``noise`` (needs per-node ``sigma`` and ``phi``).  Metrics:
    ``consensus_error`` (||cbar 1 - x||^2 with cbar the mean of c),
    ``dual_gap``, ``L`` ((1/m) sum |gaps|), ``delta`` (fraction of edges with
    gap >= eps), ``mass``.  The loop follows :func:`binary_step`,
    :func:`epsilon_gap_step` and :func:`noise_step` operation for operation.
    """
    c = as_vector(c, net.n, "c")
    cbar = float(np.mean(c))
    rng = trial_rng(seed, trial)
    dist = Coordinate.uniform(net.m)
    ei = net.edge_array[:, 0].tolist()
    ej = net.edge_array[:, 1].tolist()
    xs = c.tolist()
    ys = [0.0] * net.m
    m = net.m
    inc = [[] for _ in range(net.n)]
    for k, (i, j) in enumerate(net.edges):
        inc[i].append(k)
        inc[j].append(k)
    gaps = [abs(xs[i] - xs[j]) for i, j in net.edges]
    gsum = sum(gaps)
    trace = Trace()
    d_star = 0.5 * consensus_error(c)
    if oracle == "noise":
        noise = NoiseState.start(np.broadcast_to(sigma, (net.n,)), phi)
        sig, ph, tt, last = noise.sigma.tolist(), noise.phi.tolist(), [0] * net.n, [0.0] * net.n
    elif oracle == "binary":
        if schedule is None:
            raise InvalidParameterError("binary oracle needs a stepsize schedule")
    elif oracle == "gap":
        if eps is None or eps <= 0:
            raise InvalidParameterError("gap oracle needs eps > 0")
    else:
        raise InvalidParameterError(f"unknown oracle {oracle!r}")

    def record(k):
        x = np.array(xs)
        if "consensus_error" in metrics:
            d = x - cbar
            trace.add(trial, k, "consensus_error", float(d @ d))
        if "dual_gap" in metrics:
            trace.add(trial, k, "dual_gap", dual_gap(net, c, np.array(ys))[0])
        if "L" in metrics:
            trace.add(trial, k, "L", L_measure(net, x))
        if "delta" in metrics:
            trace.add(trial, k, "delta", delta_fraction(net, x, eps))
        if "mass" in metrics:
            trace.add(trial, k, "mass", float(np.sum(x)))
        if "d_star" in metrics:
            trace.add(trial, k, "d_star", d_star)

    record(0)
    adaptive = oracle == "binary" and schedule.kind == "adaptive"
    done = 0
    while done < iterations:
        chunk = min(iterations - done, 1 if oracle == "noise" else 4096)
        edges = dist.draw_many(rng, chunk).tolist()
        for e in edges:
            i, j = ei[e], ej[e]
            if oracle == "binary":
                lam = schedule.at(done, gsum, m) if adaptive else schedule.at(done)
                s = 1.0 if xs[i] < xs[j] else -1.0
                xs[i] += s * lam
                xs[j] -= s * lam
                ys[e] += s * lam
            elif oracle == "gap":
                h = eps / 2.0
                if xs[i] <= xs[j] - eps:
                    xs[i] += h
                    xs[j] -= h
                    ys[e] += h
                elif xs[j] <= xs[i] - eps:
                    xs[i] -= h
                    xs[j] += h
                    ys[e] -= h
            else:
                ws = []
                for a in (i, j):
                    v = sig[a] * rng.standard_normal()
                    fresh = ph[a] ** tt[a] * v
                    ws.append(fresh - last[a])
                    last[a] = fresh
                    tt[a] += 1
                avg = (xs[i] + ws[0] + xs[j] + ws[1]) / 2.0
                xs[i] = avg
                xs[j] = avg
            if adaptive:
                for a in (i, j):
                    for k2 in inc[a]:
                        g = abs(xs[ei[k2]] - xs[ej[k2]])
                        gsum += g - gaps[k2]
                        gaps[k2] = g
            done += 1
            if adaptive and done % 1024 == 0:
                gsum = sum(gaps)
            if done % record_every == 0 or done == iterations:
                record(done)
    return trace
