"""Network graphs and consensus (mixing) matrices."""

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

GRAPH_KINDS = ("complete", "ring", "path", "k_cyclic", "erdos_renyi")


class ParameterError(ValueError):
    """Invalid graph or matrix parameters."""


class GenerationError(RuntimeError):
    """Random graph generation did not produce a connected graph."""


class InvariantError(ValueError):
    """A matrix violates the consensus-matrix assumptions."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``edges`` holds each unordered pair once as ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: frozenset
    kind: str = "custom"
    params: tuple = ()

    def adjacency(self):
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def degrees(self):
        return self.adjacency().sum(axis=1)

    def neighbors(self, i):
        return sorted({j for e in self.edges if i in e for j in e if j != i})

    def is_connected(self):
        return _connected(self.adjacency())


def _connected(adj):
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = seen.copy()
    while frontier.any():
        nxt = adj[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return bool(seen.all())


def _pairs_from_adjacency(adj):
    i, j = np.nonzero(np.triu(adj, 1))
    return frozenset(zip(i.tolist(), j.tolist()))


def build_graph(kind, n, seed=0, k=4, p_edge=0.5, max_retries=1000):
    """Build a connected graph of the requested family.

    Parameters
    ----------
    kind : str
        One of ``complete``, ``ring``, ``path``, ``k_cyclic``, ``erdos_renyi``.
    n : int
        Number of nodes (at least 2).
    seed : int
        Master seed; only used by ``erdos_renyi``.
    k : int
        Even neighbourhood size for ``k_cyclic``: node i links to i +- 1..k/2.
    p_edge : float
        Edge probability for ``erdos_renyi``.
    max_retries : int
        Redraws allowed before giving up on a connected Erdos-Renyi graph.

    Returns
    -------
    Graph
    """
    if kind not in GRAPH_KINDS:
        raise ParameterError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    n = int(n)
    if n < 2:
        raise ParameterError(f"graph needs n >= 2 nodes, got {n}")

    if kind == "complete":
        edges = frozenset((i, j) for i in range(n) for j in range(i + 1, n))
        return Graph(n, edges, kind)
    if kind == "path":
        return Graph(n, frozenset((i, i + 1) for i in range(n - 1)), kind)
    if kind == "ring":
        edges = {tuple(sorted((i, (i + 1) % n))) for i in range(n)}
        return Graph(n, frozenset(edges), kind)
    if kind == "k_cyclic":
        k = int(k)
        if k < 2 or k % 2 or k >= n:
            raise ParameterError(f"k_cyclic needs even k with 2 <= k < n, got k={k}, n={n}")
        edges = {tuple(sorted((i, (i + s) % n))) for i in range(n) for s in range(1, k // 2 + 1)}
        return Graph(n, frozenset(edges), kind, (k,))

    p_edge = float(p_edge)
    if not 0.0 < p_edge <= 1.0:
        raise ParameterError(f"p_edge must be in (0, 1], got {p_edge}")
    base = RngStream(seed)
    iu = np.triu_indices(n, 1)
    for attempt in range(max_retries):
        u = base.spawn(attempt).uniform("graph", 0, shape=len(iu[0]))[0]
        adj = np.zeros((n, n), dtype=bool)
        adj[iu] = u < p_edge
        adj |= adj.T
        if _connected(adj):
            return Graph(n, _pairs_from_adjacency(adj), kind, (p_edge,))
    raise GenerationError(
        f"no connected Erdos-Renyi graph (n={n}, p_edge={p_edge}) after {max_retries} draws"
    )


@dataclass(frozen=True)
class ConsensusMatrix:
    """Symmetric doubly stochastic matrix with the sparsity of a graph.

    ``eigenvalues`` are sorted in decreasing order, so ``eigenvalues[0]``
    is 1 and ``beta`` is the largest absolute value among the rest.
    """

    entries: np.ndarray
    eigenvalues: np.ndarray
    beta: float
    graph: Graph = field(default=None, compare=False)

    @property
    def n(self):
        return self.entries.shape[0]

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.eigenvalues.setflags(write=False)


def metropolis_weights(g):
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_j))`` on edges."""
    if not g.is_connected():
        raise ParameterError("Metropolis weights require a connected graph")
    deg = g.degrees()
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return from_matrix(w, graph=g)


def from_matrix(w, graph=None, atol=1e-12):
    """Validate ``w`` as a consensus matrix and attach its spectrum."""
    w = np.array(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvariantError(f"consensus matrix must be square, got shape {w.shape}")
    if not np.array_equal(w, w.T):
        raise InvariantError("consensus matrix must be symmetric")
    if np.abs(w.sum(axis=1) - 1.0).max() > atol:
        raise InvariantError("consensus matrix rows must sum to 1")
    lam, beta = _spectrum(w)
    return ConsensusMatrix(w, lam, beta, graph)


def _spectrum(w):
    lam = np.sort(np.linalg.eigvalsh(w))[::-1].copy()
    beta = float(max(abs(lam[1]), abs(lam[-1]))) if lam.size > 1 else 0.0
    if beta >= 1.0:
        raise InvariantError(f"beta = {beta} >= 1: graph disconnected or W has eigenvalue -1")
    return lam, beta


def spectral_beta(w):
    """Second largest absolute eigenvalue of a consensus matrix.

    Accepts a :class:`ConsensusMatrix` (returns the stored value) or a raw
    array, which is checked for symmetry first.
    """
    if isinstance(w, ConsensusMatrix):
        return w.beta
    w = np.asarray(w, dtype=float)
    if not np.array_equal(w, w.T):
        raise InvariantError("spectral_beta needs a symmetric matrix")
    return _spectrum(w)[1]


def write_weights(w, path):
    """Write ``i j w_ij`` lines (upper triangle with diagonal), 17 significant digits."""
    m = w.entries if isinstance(w, ConsensusMatrix) else np.asarray(w)
    with open(path, "w") as fh:
        fh.write(f"# n {m.shape[0]}\n")
        for i in range(m.shape[0]):
            for j in range(i, m.shape[0]):
                if m[i, j] != 0.0:
                    fh.write(f"{i} {j} {m[i, j]:.17g}\n")


def read_weights(path):
    """Inverse of :func:`write_weights`; returns a validated ConsensusMatrix."""
    triples, n = [], None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "n":
                    n = int(parts[1])
                continue
            i, j, v = line.split()
            triples.append((int(i), int(j), float(v)))
    if n is None:
        n = 1 + max(max(i, j) for i, j, _ in triples)
    w = np.zeros((n, n))
    for i, j, v in triples:
        w[i, j] = w[j, i] = v
    edges = frozenset((i, j) for i, j, _ in triples if i != j)
    return from_matrix(w, graph=Graph(n, edges))
