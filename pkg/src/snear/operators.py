"""Randomized inexactness operators.

``CommOperator`` models what a node actually transmits when it wants to send
a vector ``v`` (the channel output ``T_c[v]``); ``GradOperator`` models the
gradient a node actually obtains. Both have zero-mean errors with a known
bound on the second moment, and all randomness comes from a keyed
:class:`~snear.rng.RngStream` so draws for the communication channel and
for gradients never share a substream.
"""

from dataclasses import dataclass

import numpy as np

COMM_KINDS = ("exact", "quantizer", "gaussian")
GRAD_KINDS = ("exact", "gaussian", "minibatch")


class NumericError(ArithmeticError):
    """Non-finite input to an operator."""


class UnsupportedOperatorError(TypeError):
    """Operator cannot be applied to the given objective."""


def _grid_index(x, delta):
    # x*delta may round to just below an integer when x is a grid point
    k = np.floor(x * delta)
    k += (k + 1.0) / delta <= x
    k -= k / delta > x
    return k


def quantize(x, delta, u):
    """Probabilistic quantizer, vectorized.

    Rounds each entry of ``x`` down to the grid ``Z / delta`` with
    probability ``(ceil(x) - x) * delta`` and up otherwise, using the
    uniforms ``u`` (same shape as ``x``) as the coin flips.
    """
    x = np.asarray(x, dtype=float)
    y = x * delta
    if not np.isfinite(y).all():
        raise NumericError("cannot quantize non-finite values")
    k = np.floor(y)
    frac = y - k
    # entries within rounding distance of a grid point get the exact treatment
    edge = (frac < 1e-9) | (frac > 1.0 - 1e-9)
    if edge.any():
        xe = x[edge]
        ke = _grid_index(xe, delta)
        k[edge] = ke
        frac[edge] = np.clip((xe - ke / delta) * delta, 0.0, 1.0)
    k += u < frac
    k /= delta
    return k


def quantize_scalar(x, delta, rng, node=0, iteration=0, rnd=0, index=0):
    """Quantize one scalar with grid spacing ``1/delta``.

    The coin flip is the draw ``index`` of the ``comm`` substream keyed by
    ``(node, iteration, rnd)``.
    """
    delta = int(delta)
    if delta < 1:
        raise ValueError(f"delta must be a positive integer, got {delta}")
    u = rng.uniform("comm", node, iteration, rnd, shape=index + 1)[0, index]
    return float(quantize(np.array([x]), delta, np.array([u]))[0])


@dataclass(frozen=True)
class CommOperator:
    """Communication channel.

    kind : ``exact``, ``quantizer`` (probabilistic, ``delta`` levels per unit)
        or ``gaussian`` (additive N(0, sigma_c**2 / p) per coordinate).
    """

    kind: str = "exact"
    delta: int = 0
    sigma_c: float = 0.0

    def __post_init__(self):
        if self.kind not in COMM_KINDS:
            raise ValueError(f"unknown comm kind {self.kind!r}")
        if self.kind == "quantizer" and int(self.delta) < 1:
            raise ValueError("quantizer needs a positive integer delta")
        if self.sigma_c < 0:
            raise ValueError("sigma_c must be non-negative")

    def sigma_c_sq_bound(self, p):
        """Bound on E||T_c[v] - v||^2 for a p-dimensional vector."""
        if self.kind == "quantizer":
            return p / (4.0 * self.delta ** 2)
        if self.kind == "gaussian":
            return self.sigma_c ** 2
        return 0.0

    @property
    def is_exact(self):
        return self.kind == "exact" or (self.kind == "gaussian" and self.sigma_c == 0.0)


def apply_comm(op, v, rng, iteration=0, rnd=0, purpose="comm", nodes=None):
    """Channel output for a block of node vectors.

    Parameters
    ----------
    op : CommOperator
    v : ndarray, shape (n, p) or (p,)
        One row per sending node.
    rng : RngStream
    iteration, rnd : int
        Position of the exchange; together with the node index and
        ``purpose`` they select the substream.
    nodes : array of int, optional
        Node ids of the rows of ``v`` (default ``0..n-1``).

    Returns
    -------
    ndarray
        Same shape as ``v``.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    block = v[None, :] if single else v
    if not np.all(np.isfinite(block)):
        raise NumericError("channel input is not finite")
    if op.is_exact:
        return v.copy()
    if nodes is None:
        nodes = np.arange(block.shape[0])
    p = block.shape[1]
    if op.kind == "quantizer":
        u = rng.uniform(purpose, nodes, iteration, rnd, shape=p)
        out = quantize(block, op.delta, u)
    else:
        z = rng.normal(purpose, nodes, iteration, rnd, shape=p)
        out = block + (op.sigma_c / np.sqrt(p)) * z
    return out[0] if single else out


@dataclass(frozen=True)
class GradOperator:
    """Gradient oracle.

    kind : ``exact``, ``gaussian`` (additive N(0, sigma_g**2 / p) per
        coordinate) or ``minibatch`` (``batch`` samples with replacement
        from the node's shard).
    sigma_g_sq : declared variance bound for minibatch gradients, used by the
        theory module; estimate it with :func:`estimate_sigma_g_sq`.
    """

    kind: str = "exact"
    sigma_g: float = 0.0
    batch: int = 0
    sigma_g_sq: float = None

    def __post_init__(self):
        if self.kind not in GRAD_KINDS:
            raise ValueError(f"unknown grad kind {self.kind!r}")
        if self.kind == "minibatch" and int(self.batch) < 1:
            raise ValueError("minibatch needs a positive batch size")
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be non-negative")

    def sigma_g_sq_bound(self):
        if self.kind == "gaussian":
            return self.sigma_g ** 2
        if self.kind == "minibatch":
            return float("nan") if self.sigma_g_sq is None else self.sigma_g_sq
        return 0.0


def apply_grad(op, obj, x, rng, iteration=0, nodes=None):
    """Inexact gradients ``T_g[grad f_i(x_i)]`` for a block of nodes.

    ``x`` has one row per node in ``nodes`` (default all nodes of ``obj``).
    Minibatch draws are keyed by ``(grad, node, iteration)`` only, so any
    two methods run at the same seed see the same sample indices.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    block = x[None, :] if single else x
    if nodes is None:
        nodes = np.arange(block.shape[0]) if not single else np.array([0])
    nodes = np.atleast_1d(nodes)
    if op.kind == "minibatch":
        if not hasattr(obj, "batch_gradients"):
            raise UnsupportedOperatorError(
                f"minibatch gradients need a data-backed objective, got {type(obj).__name__}"
            )
        idx = rng.integers("grad", nodes, obj.shard_sizes[nodes], iteration, shape=op.batch)
        g = obj.batch_gradients(block, idx, nodes)
    else:
        g = obj.gradients(block, nodes)
        if op.kind == "gaussian" and op.sigma_g > 0:
            p = block.shape[1]
            g = g + (op.sigma_g / np.sqrt(p)) * rng.normal("grad", nodes, iteration, 0, shape=p)
    return g[0] if single else g


def estimate_sigma_g_sq(op, obj, x, rng, draws=10_000):
    """Largest per-node empirical E||T_g[grad f_i(x)] - grad f_i(x)||^2.

    Uses ``draws`` independent oracle calls at the common point ``x``; the
    draws use iteration keys far outside any simulated run.
    """
    n = obj.n
    xb = np.broadcast_to(np.asarray(x, dtype=float), (n, obj.p))
    exact = obj.gradients(xb)
    acc = np.zeros(n)
    offset = 1 << 40
    for d in range(draws):
        g = apply_grad(op, obj, xb, rng, iteration=offset + d)
        acc += ((g - exact) ** 2).sum(axis=1)
    return float((acc / draws).max())
