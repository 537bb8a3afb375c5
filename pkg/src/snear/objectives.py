"""Per-node objectives, data ingestion and centralized ground truth.

All oracles are vectorized over nodes: ``X`` arguments are ``(m, p)`` blocks
whose row ``r`` is evaluated with the function of node ``nodes[r]``.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit

from .rng import RngStream


class ParameterError(ValueError):
    pass


class ParseError(ValueError):
    """Malformed LIBSVM input; the message carries the line number."""


class ConvergenceError(RuntimeError):
    pass


class Objective:
    """Common interface and aggregate constants.

    Subclasses set ``n``, ``p``, ``mu_i`` and ``L_i`` (arrays of length n)
    and implement ``values`` and ``gradients``.
    """

    n: int
    p: int
    mu_i: np.ndarray
    L_i: np.ndarray

    def _nodes(self, nodes, m):
        return np.arange(self.n) if nodes is None else np.atleast_1d(nodes)

    # aggregates ---------------------------------------------------------
    @property
    def mu(self):
        return float(self.mu_i.min())

    @property
    def L(self):
        return float(self.L_i.max())

    @property
    def mu_bar(self):
        return float(self.mu_i.mean())

    @property
    def L_bar(self):
        return float(self.L_i.mean())

    @property
    def kappa(self):
        return self.L / self.mu

    @property
    def gamma_bar(self):
        return self.mu_bar * self.L_bar / (self.mu_bar + self.L_bar)

    def max_steplength(self):
        """``min{2/(mu+L), 2/(mu_bar+L_bar)}``, the steplength limit of the theory."""
        return min(2.0 / (self.mu + self.L), 2.0 / (self.mu_bar + self.L_bar))

    # average function f_bar = (1/n) sum_i f_i ------------------------------
    def f_bar(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.values(np.broadcast_to(x, (self.n, self.p))).mean())

    def grad_bar(self, x):
        x = np.asarray(x, dtype=float)
        return self.gradients(np.broadcast_to(x, (self.n, self.p))).mean(axis=0)

    def fingerprint(self):
        h = hashlib.sha256(type(self).__name__.encode())
        for arr in self._hash_arrays():
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


class QuadraticObjective(Objective):
    """``f_i(x) = 0.5 x'A_i x + b_i'x`` with symmetric positive definite A_i."""

    def __init__(self, A, b):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        if A.ndim == 2:
            A = A[None]
        if b.ndim == 1:
            b = b[None]
        if A.shape[0] != b.shape[0] or A.shape[1:] != (b.shape[1], b.shape[1]):
            raise ParameterError(f"shape mismatch: A {A.shape}, b {b.shape}")
        if not np.allclose(A, np.swapaxes(A, 1, 2), rtol=0, atol=1e-14):
            raise ParameterError("every A_i must be symmetric")
        self.A = 0.5 * (A + np.swapaxes(A, 1, 2))
        self.b = b
        self.n, self.p = b.shape
        eig = np.linalg.eigvalsh(self.A)
        self.mu_i = eig[:, 0].copy()
        self.L_i = eig[:, -1].copy()
        if self.mu_i.min() <= 0:
            raise ParameterError("every A_i must be positive definite")

    @classmethod
    def replicated(cls, A, b, n):
        """The same function at every node."""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(np.repeat(A[None], n, axis=0), np.repeat(b[None], n, axis=0))

    def values(self, X, nodes=None):
        nodes = self._nodes(nodes, len(X))
        A, b = self.A[nodes], self.b[nodes]
        return 0.5 * np.einsum("mp,mpq,mq->m", X, A, X) + np.einsum("mp,mp->m", b, X)

    def gradients(self, X, nodes=None):
        nodes = self._nodes(nodes, len(X))
        return np.einsum("mpq,mq->mp", self.A[nodes], X) + self.b[nodes]

    def minimizer(self):
        return -np.linalg.solve(self.A.sum(axis=0), self.b.sum(axis=0))

    def local_minimizers(self):
        return -np.linalg.solve(self.A, self.b[..., None])[..., 0]

    def _hash_arrays(self):
        return (self.A, self.b)


def make_quadratic(n, p, mu=1.0, L=10.0, seed=0, spread=0.0, b_scale=1.0):
    """Random strongly convex quadratics.

    Node ``i`` gets ``A_i = Q_i diag(s_i) Q_i'`` with a random orthogonal
    ``Q_i``. Its spectrum contains ``mu_i`` and ``L_i`` exactly, the other
    eigenvalues uniform in between. With ``spread = 0`` every node has
    ``mu_i = mu``, ``L_i = L``; with ``spread > 0`` the per-node extremes are
    drawn from ``[mu, mu(1+spread)]`` and ``[L/(1+spread), L]``.
    """
    if p < 1 or n < 1:
        raise ParameterError("need n >= 1 and p >= 1")
    if mu <= 0 or L < mu:
        raise ParameterError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    gen = RngStream(seed).generator("data", 1)
    A = np.empty((n, p, p))
    for i in range(n):
        mu_i = mu * (1.0 + spread * gen.uniform())
        L_i = max(L / (1.0 + spread * gen.uniform()), mu_i)
        s = np.concatenate([[mu_i, L_i][: min(p, 2)], gen.uniform(mu_i, L_i, size=max(p - 2, 0))])
        if p == 1:
            s = np.array([mu_i])
        q, r = np.linalg.qr(gen.standard_normal((p, p)))
        q = q * np.sign(np.diag(r))
        A[i] = (q * s) @ q.T
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    b = b_scale * gen.standard_normal((n, p))
    return QuadraticObjective(A, b)


@dataclass
class Dataset:
    """Binary classification data: ``features`` is an (M, p) CSR matrix."""

    features: sparse.csr_matrix
    labels: np.ndarray

    @property
    def M(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]


DEFAULT_LABEL_MAP = {1.0: 1.0, -1.0: -1.0, 0.0: -1.0}


def parse_label_map(text):
    """``"1:1,2:-1"`` -> ``{1.0: 1.0, 2.0: -1.0}``."""
    out = {}
    for item in text.split(","):
        src, dst = item.split(":")
        out[float(src)] = float(dst)
    return out


def load_libsvm(path, label_map=None, n_features=None):
    """Read a LIBSVM/svmlight text file.

    Each line is ``label idx:val idx:val ...`` with 1-based, increasing
    feature indices. Feature ``idx`` is stored in column ``idx - 1`` and the
    dimension is the largest index seen (or ``n_features`` if larger).
    Labels pass through ``label_map`` (default: +1 -> +1, -1 -> -1,
    0 -> -1); an unmapped label is a :class:`ParseError`.
    """
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    if isinstance(label_map, str):
        label_map = parse_label_map(label_map)
    labels, indptr, indices, data = [], [0], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, *items = line.split()
            try:
                lab = float(head)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad label {head!r}") from None
            if lab not in label_map:
                raise ParseError(f"{path}:{lineno}: label {head!r} not in label map")
            labels.append(label_map[lab])
            last = 0
            for item in items:
                try:
                    idx_s, val_s = item.split(":")
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad feature {item!r}") from None
                if idx <= last:
                    raise ParseError(f"{path}:{lineno}: feature indices must be increasing and >= 1")
                last = idx
                indices.append(idx - 1)
                data.append(val)
            indptr.append(len(indices))
    if not labels:
        raise ParseError(f"{path}: no samples")
    p = max(indices, default=-1) + 1
    if n_features is not None:
        p = max(p, int(n_features))
    X = sparse.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(labels), p),
    )
    return Dataset(X, np.array(labels))


def synthetic_logistic(M=500, p=20, seed=0, flip=0.05, scale=1.0, clusters=1, shift=0.0):
    """Gaussian features with labels from a planted logistic model.

    Each label is flipped with probability ``flip`` so the data are not
    separable. Features are ``scale * N(0, 1/p)``, rows of norm about ``scale``.

    With ``clusters > 1`` the samples come in that many contiguous blocks,
    each with its own feature mean of norm about ``scale * shift``. Sharding
    without a shuffle then gives every node differently distributed data.
    """
    gen = RngStream(seed).generator("data", 2)
    A = gen.standard_normal((M, p))
    if clusters > 1 and shift:
        centers = shift * gen.standard_normal((clusters, p))
        for c, block in zip(centers, np.array_split(np.arange(M), clusters)):
            A[block] += c
    A *= scale / np.sqrt(p)
    w = 3.0 * gen.standard_normal(p)
    prob = expit(A @ w)
    y = np.where(gen.uniform(size=M) < prob, 1.0, -1.0)
    y[gen.uniform(size=M) < flip] *= -1.0
    return Dataset(sparse.csr_matrix(A), y)


def shard_indices(M, n, seed=0, shuffle=True):
    """Cut ``range(M)`` into ``n`` contiguous, near-equal shards.

    The sample order is shuffled with ``seed`` first unless ``shuffle`` is
    false, in which case shards follow the file order.
    """
    order = RngStream(seed).generator("data", 3).permutation(M) if shuffle else np.arange(M)
    return [np.sort(s) for s in np.array_split(order, n)]


def _power_lmax(G, iters=50, tol=1e-10):
    # G symmetric PSD; falls back to a dense eigensolve if not converged
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            if np.linalg.norm(G @ v - new * v) <= 1e-6 * max(1.0, new):
                return new
        lam = new
    return float(np.linalg.eigvalsh(G)[-1])


class LogisticObjective(Objective):
    """Regularized logistic loss on sample shards.

    ``f_i(x) = (1/|S_i|) sum_{s in S_i} log(1 + exp(-b_s <a_s, x>)) + ||x||^2 / M``

    Shards are stored padded to a common length so that all nodes can be
    evaluated in one vectorized call; padded rows carry zero weight.
    """

    def __init__(self, dataset, n, seed=0, shards=None):
        M = dataset.M
        if n < 1 or n > M:
            raise ParameterError(f"need 1 <= n <= M, got n={n}, M={M}")
        shards = shard_indices(M, n, seed) if shards is None else [np.asarray(s) for s in shards]
        if any(len(s) == 0 for s in shards):
            raise ParameterError("empty shard")
        self.dataset = dataset
        self.shards = shards
        self.n, self.p, self.M = n, dataset.p, M
        self.shard_sizes = np.array([len(s) for s in shards])
        smax = self.shard_sizes.max()
        dense = dataset.features.toarray()
        self.feats = np.zeros((n, smax, self.p))
        self.labels = np.zeros((n, smax))
        self.weights = np.zeros((n, smax))
        for i, s in enumerate(shards):
            self.feats[i, : len(s)] = dense[s]
            self.labels[i, : len(s)] = dataset.labels[s]
            self.weights[i, : len(s)] = 1.0 / len(s)
        self.reg = 1.0 / M
        self.mu_i = np.full(n, 2.0 * self.reg)
        self.L_i = np.array(
            [_power_lmax(self.feats[i].T @ self.feats[i]) / (4.0 * self.shard_sizes[i]) for i in range(n)]
        ) + 2.0 * self.reg

    def values(self, X, nodes=None):
        nodes = self._nodes(nodes, len(X))
        z = self.labels[nodes] * np.einsum("msp,mp->ms", self.feats[nodes], X)
        loss = (self.weights[nodes] * np.logaddexp(0.0, -z)).sum(axis=1)
        return loss + self.reg * (X * X).sum(axis=1)

    def gradients(self, X, nodes=None):
        nodes = self._nodes(nodes, len(X))
        b = self.labels[nodes]
        z = b * np.einsum("msp,mp->ms", self.feats[nodes], X)
        coef = -self.weights[nodes] * b * expit(-z)
        return np.einsum("ms,msp->mp", coef, self.feats[nodes]) + 2.0 * self.reg * X

    def batch_gradients(self, X, idx, nodes=None):
        """Mini-batch gradients; ``idx[r]`` holds shard positions for row r."""
        nodes = self._nodes(nodes, len(X))
        a = self.feats[nodes[:, None], idx]
        b = self.labels[nodes[:, None], idx]
        z = b * np.einsum("mbp,mp->mb", a, X)
        coef = -b * expit(-z) / idx.shape[1]
        return np.einsum("mb,mbp->mp", coef, a) + 2.0 * self.reg * X

    def _hash_arrays(self):
        return (self.feats, self.labels, self.weights)


def make_logistic(dataset, n, seed=0, shuffle=True):
    shards = shard_indices(dataset.M, n, seed, shuffle)
    return LogisticObjective(dataset, n, seed, shards=shards)


@dataclass
class GroundTruth:
    x_star: np.ndarray
    f_star: float
    u_star: np.ndarray
    iterations: int = 0


def _gradient_descent(grad, x0, step, tol, max_iter):
    x = np.array(x0, dtype=float)
    for it in range(int(max_iter)):
        g = grad(x)
        if np.linalg.norm(g) <= tol:
            return x, it
        x = x - step * g
    raise ConvergenceError(f"gradient descent did not reach tolerance {tol} in {max_iter} iterations")


def solve_centralized(obj, tol=1e-12, max_iter=10_000_000, x0=None):
    """Global minimizer of ``sum_i f_i`` and the per-node minimizers.

    Quadratics use the closed form; anything else runs full gradient
    descent with steplength ``0.9 * 2 / (mu + L)`` until the gradient norm
    of ``sum_i f_i`` (resp. ``f_i``) is at most ``tol``.
    """
    if isinstance(obj, QuadraticObjective):
        x_star = obj.minimizer()
        u_star = obj.local_minimizers()
        return GroundTruth(x_star, obj.f_bar(x_star), u_star)

    x0 = np.zeros(obj.p) if x0 is None else x0
    n = obj.n
    step = 0.9 * 2.0 / (obj.mu_bar + obj.L_bar) / n
    x_star, iters = _gradient_descent(lambda x: n * obj.grad_bar(x), x0, step, tol, max_iter)
    u_star = np.empty((n, obj.p))
    for i in range(n):
        step_i = 0.9 * 2.0 / (obj.mu_i[i] + obj.L_i[i])
        gi = lambda x, i=i: obj.gradients(x[None], [i])[0]
        u_star[i], _ = _gradient_descent(gi, x_star, step_i, tol, max_iter)
    return GroundTruth(x_star, obj.f_bar(x_star), u_star, iters)
