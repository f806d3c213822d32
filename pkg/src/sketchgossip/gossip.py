"""Randomized gossip protocols on simulated networks.

Each protocol is a node-local rewrite of a solver variant applied to an
average-consensus system; the arithmetic follows the solver's operation
order, so a protocol and its solver counterpart produce identical floats
under the same random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .graphs import incidence, normalized_incidence
from .linalg import as_vector, pseudoinverse
from .momentum import AccParams, acc_params, acc_row_update
from .linalg import Spectrum
from .sketches import Coordinate, UniformBlock
from .streams import as_rng, trial_rng
from .trace import Trace

CHUNK = 8192


@dataclass
class GossipState:
    """Node values and protocol registers.

    ``x_prev`` starts equal to ``x``; ``v`` (accelerated) starts at ``c``;
    ``y_edges`` holds per-edge dual values for the dual protocol.
    """

    network: object
    x: np.ndarray
    x_prev: np.ndarray
    c: np.ndarray
    rng: np.random.Generator
    clock: int = 0
    v: np.ndarray | None = None
    y_edges: np.ndarray | None = None
    gamma_prev: float = 0.0
    last: object = None

    @classmethod
    def start(cls, network, c, rng=None):
        c = as_vector(c, network.n, "c").copy()
        return cls(network, c.copy(), c.copy(), c, as_rng(rng), 0, c.copy(),
                   np.zeros(network.m))

    def evolve(self, **kw):
        data = dict(self.__dict__)
        data.update(kw)
        data["clock"] = self.clock + 1
        return GossipState(**data)


def _weights(state, weights):
    if weights is None:
        weights = state.network.weights
    return np.ones(state.network.n) if weights is None else np.asarray(weights, float)


def _edge_cache(net):
    if "edge_dist" not in net._cache:
        net._cache["edge_dist"] = Coordinate.uniform(net.m)
    return net._cache["edge_dist"]


def _edge_row(i, j, w):
    vals = np.array([1.0, -1.0])
    cols = np.array([i, j])
    dvals = vals / w[cols]
    return cols, vals, dvals, float(np.dot(vals, dvals))


def pairwise_step(state, omega=1.0, weights=None):
    """Weighted pairwise averaging on a uniformly sampled edge.

    x_i+ = (1 - omega w_j/(w_i+w_j)) x_i + omega w_j/(w_i+w_j) x_j and
    symmetrically for j; with equal weights and omega = 1 both endpoints
    receive (x_i + x_j)/2.
    """
    net = state.network
    w = _weights(state, weights)
    e = int(_edge_cache(net).draw(net.m, state.rng)[0])
    i, j = net.edges[e]
    cols, vals, dvals, norm2 = _edge_row(i, j, w)
    x = state.x.copy()
    r = float(np.dot(vals, x[cols])) - 0.0
    x[cols] -= (omega * (r / norm2)) * dvals
    return state.evolve(x=x, x_prev=state.x, last=e)


def laplacian_node_probabilities(net, weights=None, sampling="row-norms"):
    """Sampling law over nodes: row-norm (``d_i^2/w_i + sum_N 1/w_j``) or uniform."""
    if sampling == "uniform":
        return np.full(net.n, 1.0 / net.n)
    w = np.ones(net.n) if weights is None else np.asarray(weights, float)
    norms = np.array([_node_row(net, i, w)[3] for i in range(net.n)])
    return norms / norms.sum()


def _node_row(net, i, w):
    cols = np.sort(np.append(net.neighbors[i], i))
    vals = np.where(cols == i, float(net.degrees[i]), -1.0)
    dvals = vals / w[cols]
    return cols, vals, dvals, float(np.dot(vals, dvals))


def laplacian_node_step(state, omega=1.0, weights=None, sampling="row-norms"):
    """Node i and its neighbours update from the Laplacian row of i.

    With r = d_i x_i - sum_N x and s = r / (d_i^2/w_i + sum_N 1/w_j):
    x_i -= omega s d_i / w_i and x_j += omega s / w_j for each neighbour.
    At omega = 1 the row equation holds afterwards: x_i equals the mean of
    its neighbours.
    """
    net = state.network
    w = _weights(state, weights)
    key = ("node_dist", sampling, w.tobytes())
    if key not in net._cache:
        net._cache[key] = Coordinate(laplacian_node_probabilities(net, w, sampling))
    i = int(net._cache[key].draw(net.n, state.rng)[0])
    cols, vals, dvals, norm2 = _node_row(net, i, w)
    x = state.x.copy()
    r = float(np.dot(vals, x[cols])) - 0.0
    x[cols] -= (omega * (r / norm2)) * dvals
    return state.evolve(x=x, x_prev=state.x, last=i)


def momentum_gossip_step(state, omega=1.0, beta=0.0):
    """Pairwise gossip with heavy-ball memory at every node.

    Endpoints: (2-omega)/2 x_self + omega/2 x_other + beta (x_self - x_self_prev);
    every other node: x + beta (x - x_prev).
    """
    net = state.network
    e = int(_edge_cache(net).draw(net.m, state.rng)[0])
    i, j = net.edges[e]
    cols, vals, dvals, norm2 = _edge_row(i, j, np.ones(net.n))
    x = state.x
    r = float(np.dot(vals, x[cols])) - 0.0
    x_new = x.copy()
    x_new[cols] -= (omega * (r / norm2)) * dvals
    if beta != 0.0:
        x_new = x_new + beta * (x - state.x_prev)
    return state.evolve(x=x_new, x_prev=x, last=e)


def _components(n_nodes, edge_list):
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edge_list:
        if i not in parent:
            parent[i] = i
        if j not in parent:
            parent[j] = j
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for a in sorted(parent):
        groups.setdefault(find(a), []).append(a)
    return [np.array(g, dtype=np.int64) for g in groups.values()]


def block_components(net, edge_ids):
    """Connected components (size >= 2) of the subgraph spanned by ``edge_ids``."""
    edges = net.edges
    return _components(net.n, [edges[int(e)] for e in np.asarray(edge_ids).tolist()])


def block_gossip_step(state, tau, omega=1.0, beta=0.0):
    """Sample ``tau`` distinct edges; nodes average within each component.

    x_i+ = omega mean_comp + (1 - omega) x_i + beta (x_i - x_i_prev), where
    nodes outside the sampled edges form singleton components.
    """
    net = state.network
    if not 1 <= tau <= net.m:
        raise InvalidParameterError(f"tau must lie in [1, {net.m}]")
    edge_ids = UniformBlock(tau).draw(net.m, state.rng)
    x = state.x
    means = x.copy()
    comps = block_components(net, edge_ids)
    for comp in comps:
        # same reduction np.mean performs, without its dispatch overhead
        means[comp] = x[comp].sum() / comp.size
    x_new = omega * means + (1.0 - omega) * x
    if beta != 0.0:
        x_new = x_new + beta * (x - state.x_prev)
    return state.evolve(x=x_new, x_prev=x, last=comps)


def acc_gossip_params(net, option=2, value=None):
    """AccRK parameters for the normalised incidence system of ``net``.

    Option 2 defaults to nu = min(m, 1/lambda_min_plus(W)) (equal to m on sparse
    graphs); Option 1 defaults to lambda = lambda_min_plus(A^T A).
    """
    A = normalized_incidence(net)
    spec = Spectrum.of(A.T @ A / net.m)
    if value is None:
        value = min(net.m, 1.0 / spec.lambda_min_plus) if option == 2 else net.m * spec.lambda_min_plus
    return acc_params(option, net.m, value, spec)


def acc_gossip_step(state, params):
    """Accelerated gossip round.

    Every node forms y = alpha v + (1 - alpha) x.  The sampled edge's
    endpoints set x to (y_i + y_j)/2 and v_i = beta v_i + (1 - beta) y_i -
    gamma (y_i - y_j)/2 (and symmetrically); other nodes set x = y and
    v = beta v + (1 - beta) y.
    """
    net = state.network
    e = min(int(state.rng.random() * net.m), net.m - 1)
    i, j = net.edges[e]
    abg = params.at(state.gamma_prev)
    alpha = abg[0]
    y = alpha * state.v + (1.0 - alpha) * state.x
    s = 1.0 / math.sqrt(2.0)
    cols, vals = np.array([i, j]), np.array([s, -s])
    x_new, v_new = acc_row_update(y, state.v, cols, vals, 0.0, abg)
    return state.evolve(x=x_new, x_prev=state.x, v=v_new, gamma_prev=abg[2], last=e)


def dual_rnm_step(state, tau):
    """Randomized Newton ascent on the edge-valued dual variables.

    With C the sampled edges: y_C -= (Q_C Q_C^T)^+ Q_C (c + Q^T y); the
    primal values are x = c + Q^T y.
    """
    net = state.network
    if "Q" not in net._cache:
        net._cache["Q"] = incidence(net)
    Q = net._cache["Q"]
    C = UniformBlock(tau).draw(net.m, state.rng)
    QC = Q[C]
    x = state.c + Q.T @ state.y_edges
    delta = -pseudoinverse(QC @ QC.T) @ (QC @ x)
    y = state.y_edges.copy()
    y[C] += delta
    x_new = state.c + Q.T @ y
    return state.evolve(x=x_new, x_prev=state.x, y_edges=y, last=C)


def advice_identity_error(net, c, y_old, y_new, edge_ids):
    """Max violation of (Q^T y+)_i = mean_comp(c + Q^T y)_i - c_i over touched nodes."""
    Q = incidence(net)
    before = Q.T @ y_old
    after = Q.T @ y_new
    worst = 0.0
    for comp in block_components(net, edge_ids):
        target = np.mean(c[comp] + before[comp]) - c[comp]
        worst = max(worst, float(np.max(np.abs(after[comp] - target))))
    return worst


# ---------------------------------------------------------------- protocols


@dataclass(frozen=True)
class Pairwise:
    omega: float = 1.0


@dataclass(frozen=True)
class WeightedPairwise:
    omega: float = 1.0
    weights: tuple = ()


@dataclass(frozen=True)
class LaplacianNode:
    omega: float = 1.0
    weights: tuple = ()
    sampling: str = "row-norms"


@dataclass(frozen=True)
class Block:
    tau: int = 1
    omega: float = 1.0
    beta: float = 0.0


@dataclass(frozen=True)
class PairwiseMomentum:
    omega: float = 1.0
    beta: float = 0.0


@dataclass(frozen=True)
class AccGossip:
    option: int = 2
    value: float | None = None
    params: AccParams | None = field(default=None, compare=False)


@dataclass(frozen=True)
class DualRNM:
    tau: int = 1


def protocol_weights(protocol, net):
    w = getattr(protocol, "weights", ())
    if w is not None and len(w):
        return np.asarray(w, dtype=float)
    return net.node_weights()


def consensus_target(c, w):
    """B-projection of c onto consensus: the weighted mean times 1."""
    return float(np.dot(w, c) / np.sum(w))


def _pairwise_fast(net, x, w, omega, rng, ticks, target, denom, xbar, record, rec_every):
    """Pure-float loop for (weighted) pairwise gossip; same arithmetic as the step."""
    dist = _edge_cache(net)
    ei = [e[0] for e in net.edges]
    ej = [e[1] for e in net.edges]
    dv = [1.0 / wi for wi in w.tolist()]
    ndv = [-1.0 / wi for wi in w.tolist()]
    xs = x.tolist()
    wl = w.tolist()
    err = sum(wk * (xk - xbar) ** 2 for wk, xk in zip(wl, xs))
    done = 0
    while done < ticks:
        n_chunk = min(CHUNK, ticks - done)
        edges = dist.draw_many(rng, n_chunk).tolist()
        for e in edges:
            i = ei[e]
            j = ej[e]
            xi = xs[i]
            xj = xs[j]
            a = dv[i]
            b = ndv[j]
            norm2 = 1.0 * a + -1.0 * b
            step = omega * ((xi - xj) / norm2)
            ni = xi - step * a
            nj = xj - step * b
            xs[i] = ni
            xs[j] = nj
            err += wl[i] * ((ni - xbar) ** 2 - (xi - xbar) ** 2) + \
                wl[j] * ((nj - xbar) ** 2 - (xj - xbar) ** 2)
            done += 1
            if done % 4096 == 0:
                err = sum(wk * (xk - xbar) ** 2 for wk, xk in zip(wl, xs))
            rel = err / denom if denom > 0 else 0.0
            if target is not None and rel <= target:
                err = sum(wk * (xk - xbar) ** 2 for wk, xk in zip(wl, xs))
                if err / denom <= target:
                    record(done, np.array(xs), exact=True)
                    return np.array(xs), done
            if done % rec_every == 0 or done == ticks:
                record(done, np.array(xs), exact=True)
        if target is not None and done >= ticks:
            break
    return np.array(xs), done


def simulate(network, protocol, c, iterations=1000, target=None, seed=0, trial=0,
             metrics=("rel_error",), record_every=1):
    """Run a protocol from values ``c`` and record a :class:`Trace`.

    Metrics: ``rel_error`` (||x - x*||_B^2 / ||x^0 - x*||_B^2 with
    x* the weighted mean), ``mass`` (sum_i w_i x_i) and ``f`` (for pairwise
    protocols with uniform edges, 1/2 ||x - x*||^2_{E[Z]}).  Stops after
    ``iterations`` ticks or once ``rel_error <= target``.
    """
    c = as_vector(c, network.n, "c")
    w = protocol_weights(protocol, network)
    xbar = consensus_target(c, w)
    denom = float(np.dot(w, (c - xbar) ** 2))
    trace = Trace()
    L = None
    if "f" in metrics and isinstance(protocol, (Pairwise, PairwiseMomentum)) and network.weights is None:
        Q = incidence(network)
        L = Q.T @ Q / (2.0 * network.m)

    def record(k, x, exact=False):
        d = x - xbar
        rel = float(np.dot(w, d * d)) / denom if denom > 0 else 0.0
        if "rel_error" in metrics:
            trace.add(trial, k, "rel_error", rel)
        if "mass" in metrics:
            trace.add(trial, k, "mass", float(np.dot(w, x)))
        if L is not None:
            trace.add(trial, k, "f", 0.5 * float(d @ L @ d))
        return rel

    rng = trial_rng(seed, trial)
    rel = record(0, c)
    if target is not None and rel <= target:
        return trace
    if isinstance(protocol, (Pairwise, WeightedPairwise)):
        _pairwise_fast(network, c.copy(), w, protocol.omega, rng, iterations, target,
                       denom, xbar, record, record_every)
        return trace

    state = GossipState.start(network, c, rng)
    if isinstance(protocol, LaplacianNode):
        step = lambda s: laplacian_node_step(s, protocol.omega, w, protocol.sampling)
    elif isinstance(protocol, Block):
        step = lambda s: block_gossip_step(s, protocol.tau, protocol.omega, protocol.beta)
    elif isinstance(protocol, PairwiseMomentum):
        step = lambda s: momentum_gossip_step(s, protocol.omega, protocol.beta)
    elif isinstance(protocol, AccGossip):
        params = protocol.params or acc_gossip_params(network, protocol.option, protocol.value)
        step = lambda s: acc_gossip_step(s, params)
    elif isinstance(protocol, DualRNM):
        step = lambda s: dual_rnm_step(s, protocol.tau)
    else:
        raise InvalidParameterError(f"unknown protocol {protocol!r}")
    for k in range(1, iterations + 1):
        state = step(state)
        if k % record_every == 0 or k == iterations:
            rel = record(k, state.x)
        elif target is not None:
            d = state.x - xbar
            rel = float(np.dot(w, d * d)) / denom
            if rel <= target:
                record(k, state.x)
        if target is not None and rel <= target:
            break
    return trace


def iterations_to_target(network, protocol, c, target, seed=0, trial=0, max_iters=10**7):
    """Ticks until the relative error first drops to ``target`` (or ``max_iters``)."""
    tr = simulate(network, protocol, c, iterations=max_iters, target=target, seed=seed,
                  trial=trial, record_every=max_iters)
    ks, vals = tr.series("rel_error")
    if ks[-1] < max_iters or vals[-1] <= target:
        return int(ks[-1])
    return math.inf


def averaging_time(network, protocol, eps, trials, seed=0, horizon=10**6, c_sampler=None):
    """Empirical eps-averaging time.

    Smallest k at which the fraction of trials with relative error above
    ``eps`` is at most ``eps``; initial values are standard normal by default.
    """
    crossings = []
    for t in range(trials):
        rng = trial_rng(seed, t, 7)
        c = rng.standard_normal(network.n) if c_sampler is None else c_sampler(rng)
        crossings.append(iterations_to_target(network, protocol, c, eps, seed, t, horizon))
    crossings = np.sort(np.array(crossings, dtype=float))
    allowed = int(math.floor(eps * trials))
    return float(crossings[max(trials - allowed - 1, 0)])
