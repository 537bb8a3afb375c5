"""Synchronous simulation of decentralized first-order methods.

Node iterates are kept as one ``(n, p)`` array; row ``i`` belongs to node
``i``. A consensus round multiplies by ``W`` from the left, which is the
same as ``(W kron I_p)`` acting on the stacked vector.

Iteration ``k`` of every method evaluates exactly one (inexact) gradient,
at the iterate produced by iteration ``k - 1``, with the gradient substream
keyed by ``k``. Methods run with the same seed therefore draw the same
mini-batches at every iteration.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .operators import CommOperator, GradOperator, NumericError, apply_comm, apply_grad
from .rng import RngStream
from .topology import ConsensusMatrix, Graph, metropolis_weights

METHODS = ("snear_dgd", "dgd", "extra", "diging")
VARIANTS = ("Q1", "Q2", "Q3")
DIVERGENCE_THRESHOLD = 1e12


class SteplengthWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AlgoConfig:
    """Method and operator choices for one run.

    ``t`` and ``schedule`` only matter for ``snear_dgd``; ``schedule =
    "increasing"`` performs ``k`` consensus rounds at iteration ``k``.
    ``init`` is ``"zeros"`` or ``"gaussian"`` (seeded, scaled by
    ``init_scale``).
    """

    method: str = "snear_dgd"
    alpha: float = 0.1
    t: int = 1
    schedule: str = "constant"
    variant: str = "Q1"
    max_iters: int = 1000
    comm: CommOperator = field(default_factory=CommOperator)
    grad: GradOperator = field(default_factory=GradOperator)
    init: str = "zeros"
    init_scale: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown consensus variant {self.variant!r}")
        if self.schedule not in ("constant", "increasing"):
            raise ValueError(f"unknown t schedule {self.schedule!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if int(self.t) < 1:
            raise ValueError("t must be a positive integer")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")

    def rounds(self, k):
        """Consensus rounds performed at iteration k (S-NEAR-DGD)."""
        return k if self.schedule == "increasing" else int(self.t)

    @property
    def label(self):
        if self.method != "snear_dgd":
            return f"{self.method}-{self.variant}"
        t = "plus" if self.schedule == "increasing" else f"t{self.t}"
        return f"snear_dgd_{t}-{self.variant}"

    def with_(self, **changes):
        return replace(self, **changes)

    def check_steplength(self, obj):
        """Warn when alpha exceeds the limit under which the bounds hold."""
        limit = obj.max_steplength()
        if self.alpha >= limit:
            warnings.warn(
                f"alpha={self.alpha:g} >= min(2/(mu+L), 2/(mu_bar+L_bar))={limit:g}; "
                "theoretical bounds do not apply",
                SteplengthWarning,
                stacklevel=2,
            )
            return False
        return True


@dataclass
class AlgoState:
    """Per-node iterates plus cost counters.

    ``x`` is the latest decision variable; for S-NEAR-DGD it is
    ``x^{t(k)}_k`` and ``y`` the pre-consensus iterate. ``aux`` holds the
    method-specific memory (previous iterate and gradient, tracker).
    """

    x: np.ndarray
    y: np.ndarray
    k: int = 0
    comm_count: int = 0
    comp_count: int = 0
    aux: dict = field(default_factory=dict)
    diverged: bool = False

    @property
    def x_bar(self):
        return self.x.mean(axis=0)

    def copy(self):
        return AlgoState(self.x.copy(), self.y.copy(), self.k, self.comm_count,
                         self.comp_count, {k: v.copy() for k, v in self.aux.items()}, self.diverged)


@dataclass
class StepReport:
    k: int
    x_bar: np.ndarray
    diverged: bool = False
    metrics: dict = field(default_factory=dict)


def _as_matrix(w):
    if isinstance(w, ConsensusMatrix):
        return w.entries
    if isinstance(w, Graph):
        return metropolis_weights(w).entries
    return np.asarray(w, dtype=float)


def consensus_round(variant, x, W, comm_op, rng, k, j, purpose="comm"):
    """One quantized consensus round on the node block ``x``.

    Each node transmits ``q_i = T_c[x_i]`` and forms

    * Q1: ``sum_l w_il q_l + (x_i - q_i)`` (error correction)
    * Q2: ``sum_l w_il q_l``
    * Q3: ``w_ii x_i + sum_{l != i} w_il q_l``

    With an exact channel all three reduce to ``W @ x`` and that product is
    returned directly, so the variants agree bit for bit.
    """
    W = _as_matrix(W)
    if comm_op.is_exact:
        return W @ x
    q = apply_comm(comm_op, x, rng, iteration=k, rnd=j, purpose=purpose)
    if variant == "Q1":
        return W @ q + (x - q)
    if variant == "Q2":
        return W @ q
    if variant == "Q3":
        d = np.diag(W)
        return W @ q + d[:, None] * (x - q)
    raise ValueError(f"unknown consensus variant {variant!r}")


def nested_consensus(variant, y, W, comm_op, rng, k, t, purpose="comm"):
    """``t`` successive consensus rounds starting from ``y``."""
    x = y
    for j in range(1, t + 1):
        x = consensus_round(variant, x, W, comm_op, rng, k, j, purpose)
    return x


def init_state(config, obj, rng):
    n, p = obj.n, obj.p
    if config.init == "gaussian":
        y0 = config.init_scale * rng.normal("init", np.arange(n), 0, 0, shape=p)
    else:
        y0 = np.zeros((n, p))
    return AlgoState(x=y0.copy(), y=y0.copy())


def _grad(config, obj, x, rng, k, state):
    state.comp_count += 1
    return apply_grad(config.grad, obj, x, rng, iteration=k)


def snear_dgd_step(state, config, W, obj, rng):
    """Gradient step on every node, then ``t(k)`` nested consensus rounds."""
    k = state.k + 1
    g = _grad(config, obj, state.x, rng, k, state)
    state.y = state.x - config.alpha * g
    t = config.rounds(k)
    state.x = nested_consensus(config.variant, state.y, W, config.comm, rng, k, t)
    state.comm_count += t
    return _finish(state, k)


def dgd_step(state, config, W, obj, rng):
    """``x_k = consensus(x_{k-1}) - alpha g_{k-1}``."""
    k = state.k + 1
    g = _grad(config, obj, state.x, rng, k, state)
    mixed = consensus_round(config.variant, state.x, W, config.comm, rng, k, 1)
    state.comm_count += 1
    state.y = mixed
    state.x = mixed - config.alpha * g
    return _finish(state, k)


def extra_step(state, config, W, obj, rng):
    """EXTRA with ``W~ = (I + W) / 2``.

    ``x_{k+1} = x_k + C(x_k) - (x_{k-1} + C(x_{k-1})) / 2 - alpha (g_k - g_{k-1})``
    where ``C`` is the quantized consensus round. The exchange of
    ``x_{k-1}`` is the one made during the previous iteration, so EXTRA
    sends one vector per node per iteration. The first iteration is a DGD
    step.
    """
    k = state.k + 1
    g = _grad(config, obj, state.x, rng, k, state)
    mixed = consensus_round(config.variant, state.x, W, config.comm, rng, k, 1)
    state.comm_count += 1
    if k == 1:
        new_x = mixed - config.alpha * g
    else:
        aux = state.aux
        new_x = (state.x + mixed - 0.5 * (aux["x_prev"] + aux["mixed_prev"])
                 - config.alpha * (g - aux["g_prev"]))
    state.aux.update(x_prev=state.x, mixed_prev=mixed, g_prev=g)
    state.y = mixed
    state.x = new_x
    return _finish(state, k)


def diging_step(state, config, W, obj, rng):
    """DIGing (gradient tracking).

    ``s_{k-1} = C_s(s_{k-2}) + g_{k-1} - g_{k-2}`` (with ``s_0 = g_0``), then
    ``x_k = C(x_{k-1}) - alpha s_{k-1}``. Both exchanges go through the
    configured consensus variant on separate substreams.
    """
    k = state.k + 1
    g = _grad(config, obj, state.x, rng, k, state)
    aux = state.aux
    if k == 1:
        s = g.copy()
    else:
        s = consensus_round(config.variant, aux["s"], W, config.comm, rng, k, 1, purpose="comm_s")
        s = s + g - aux["g_prev"]
        state.comm_count += 1
    mixed = consensus_round(config.variant, state.x, W, config.comm, rng, k, 1)
    state.comm_count += 1
    aux.update(s=s, g_prev=g)
    state.y = mixed
    state.x = mixed - config.alpha * s
    return _finish(state, k)


STEPS = {"snear_dgd": snear_dgd_step, "dgd": dgd_step, "extra": extra_step, "diging": diging_step}


def _finish(state, k):
    state.k = k
    x = state.x
    if not np.all(np.isfinite(x)) or np.abs(x).max() > DIVERGENCE_THRESHOLD:
        state.diverged = True
    return StepReport(k, state.x_bar, state.diverged)


def step(state, config, W, obj, rng):
    """Dispatch one iteration; a non-finite channel input marks divergence."""
    try:
        return STEPS[config.method](state, config, W, obj, rng)
    except NumericError:
        state.k += 1
        state.diverged = True
        return StepReport(state.k, state.x_bar, True)


def run(config, graph, obj, seed=0, hooks=(), ground_truth=None, record_every=1):
    """Simulate ``config.max_iters`` iterations (or until a hook stops it).

    Parameters
    ----------
    config : AlgoConfig
    graph : ConsensusMatrix, Graph or ndarray
        A bare Graph gets Metropolis weights.
    obj : Objective
    seed : int
    hooks : iterable of callables
        ``hook(report, state, trace)`` is called after every iteration with
        the metrics filled in; a truthy return ends the run with status
        ``converged``.
    ground_truth : GroundTruth, optional
        Needed for the error metrics; solved on the fly when omitted.
    record_every : int
        Keep every ``record_every``-th row (the first and last are always kept).

    Returns
    -------
    RunTrace
    """
    from .analysis import RunTrace, TraceRecorder
    from .objectives import solve_centralized

    W = _as_matrix(graph)
    if ground_truth is None:
        ground_truth = solve_centralized(obj)
    rng = RngStream(seed)
    state = init_state(config, obj, rng)
    rec = TraceRecorder(obj, ground_truth, W.shape[0], record_every)
    rec.record(state, force=True)
    status = "max_iters"
    for _ in range(int(config.max_iters)):
        report = step(state, config, W, obj, rng)
        report.metrics = rec.record(state, force=state.diverged)
        if state.diverged:
            status = "diverged"
            break
        if any(h(report, state, rec) for h in hooks):
            status = "converged"
            break
    rec.finalize(state)
    return RunTrace.from_recorder(rec, status, config, seed, state)
