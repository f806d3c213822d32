"""Network generators and their matrix encodings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, InvalidInputError
from .linalg import SpdMatrix
from .streams import as_rng
from .system import LinearSystem


@dataclass(frozen=True, eq=False)
class Network:
    """Undirected connected graph on nodes ``0..n-1``.

    Edges are stored as pairs ``(i, j)`` with ``i < j``, sorted
    lexicographically; that order fixes the rows of the incidence matrix.
    """

    n: int
    edges: tuple
    weights: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise InvalidInputError("a network needs at least two nodes")
        es = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidInputError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidInputError(f"edge ({i}, {j}) out of range")
            es.append((min(i, j), max(i, j)))
        if len(set(es)) != len(es):
            raise InvalidInputError("duplicate edges")
        es.sort()
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(es))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or np.any(w <= 0):
                raise InvalidInputError("node weights must be n positive numbers")
            object.__setattr__(self, "weights", w)
        if not is_connected(n, es):
            raise InvalidInputError("network is not connected")

    @property
    def m(self):
        return len(self.edges)

    def with_weights(self, weights):
        return Network(self.n, self.edges, weights)

    @property
    def edge_array(self):
        if "ea" not in self._cache:
            self._cache["ea"] = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        return self._cache["ea"]

    @property
    def degrees(self):
        if "deg" not in self._cache:
            self._cache["deg"] = np.bincount(self.edge_array.ravel(), minlength=self.n)
        return self._cache["deg"]

    @property
    def neighbors(self):
        """Sorted neighbour arrays per node."""
        if "nb" not in self._cache:
            nb = [[] for _ in range(self.n)]
            for i, j in self.edges:
                nb[i].append(j)
                nb[j].append(i)
            self._cache["nb"] = [np.array(sorted(x), dtype=np.int64) for x in nb]
        return self._cache["nb"]

    def node_weights(self):
        return np.ones(self.n) if self.weights is None else self.weights


def is_connected(n, edges):
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def cycle(n):
    return Network(n, [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)])


def path(n):
    return Network(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return Network(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def grid2d(a, b):
    """``a`` x ``b`` grid; node ``(r, c)`` has index ``r * b + c``."""
    edges = []
    for r in range(a):
        for c in range(b):
            u = r * b + c
            if c + 1 < b:
                edges.append((u, u + 1))
            if r + 1 < a:
                edges.append((u, u + b))
    return Network(a * b, edges)


def star(n):
    """Node 0 joined to nodes 1..n-1."""
    return Network(n, [(0, j) for j in range(1, n)])


def rgg_radius(n):
    return math.sqrt(math.log(n) / n)


def rgg(n, r=None, seed=0, max_attempts=100):
    """Random geometric graph in the unit square; edges at distance ``< r``.

    Points are redrawn until the graph is connected.
    """
    r = rgg_radius(n) if r is None else float(r)
    rng = as_rng(seed)
    for _ in range(max_attempts):
        pts = rng.random((n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        ii, jj = np.nonzero(np.triu(dist < r, k=1))
        edges = list(zip(ii.tolist(), jj.tolist()))
        if is_connected(n, edges):
            return Network(n, edges)
    raise GenerationError(f"rgg({n}, r={r:.4g}) not connected after {max_attempts} attempts")


def incidence(net):
    """Q with row e = (i, j): +1 in column i, -1 in column j."""
    Q = np.zeros((net.m, net.n))
    rows = np.arange(net.m)
    Q[rows, net.edge_array[:, 0]] = 1.0
    Q[rows, net.edge_array[:, 1]] = -1.0
    return Q


def normalized_incidence(net):
    return incidence(net) / math.sqrt(2.0)


def laplacian(net):
    Q = incidence(net)
    return Q.T @ Q


def degree(net):
    return np.diag(net.degrees.astype(float))


def adjacency(net):
    Adj = np.zeros((net.n, net.n))
    e = net.edge_array
    Adj[e[:, 0], e[:, 1]] = 1.0
    Adj[e[:, 1], e[:, 0]] = 1.0
    return Adj


def random_walk_matrix(net):
    """I - D^{-1} Adj, an alternative consensus matrix."""
    return np.eye(net.n) - adjacency(net) / net.degrees[:, None]


def normalized_laplacian(net):
    """D^{-1/2} L D^{-1/2}."""
    s = 1.0 / np.sqrt(net.degrees)
    return laplacian(net) * s[:, None] * s[None, :]


def algebraic_connectivity(net):
    """Second-smallest Laplacian eigenvalue."""
    return float(np.linalg.eigvalsh(laplacian(net))[1])


def beta_of_graph(net):
    return net.n / algebraic_connectivity(net)


def cycle_alpha(n):
    return 2.0 * (1.0 - math.cos(2.0 * math.pi / n))


def path_alpha(n):
    return 2.0 * (1.0 - math.cos(math.pi / n))


def ac_system(net, kind="incidence", weights=None):
    """Average-consensus system ``A x = 0`` for the network.

    ``kind`` is ``incidence``, ``normalized`` or ``laplacian``; ``weights``
    (or the network's own) define ``B = Diag(w)``.
    """
    builders = {"incidence": incidence, "normalized": normalized_incidence,
                "laplacian": laplacian}
    if kind not in builders:
        raise InvalidInputError(f"unknown AC system {kind!r}")
    A = builders[kind](net)
    w = net.weights if weights is None else weights
    B = SpdMatrix.identity(net.n) if w is None else SpdMatrix.diagonal(w)
    return LinearSystem(A, np.zeros(A.shape[0]), B, check=False)


def parse_graph_spec(spec, seed=0):
    """Build a network from ``cycle:10``, ``grid:4x4``, ``rgg:100``, ``path:100``,
    ``complete:8`` or ``star:5``."""
    try:
        kind, arg = spec.split(":", 1)
        if kind == "grid":
            a, b = arg.lower().split("x")
            return grid2d(int(a), int(b))
        n = int(arg)
    except ValueError as exc:
        raise InvalidInputError(f"bad graph spec {spec!r}") from exc
    makers = {"cycle": cycle, "path": path, "line": path, "complete": complete, "star": star}
    if kind == "rgg":
        return rgg(n, seed=seed)
    if kind not in makers:
        raise InvalidInputError(f"unknown graph kind {kind!r}")
    return makers[kind](n)
