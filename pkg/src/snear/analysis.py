"""Run metrics, termination, cost accounting and theoretical bounds."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = ("k", "err_sq", "fval_rel_err", "consensus_viol", "comm_count", "comp_count", "welford_mean")


# --------------------------------------------------------------------------
# Welford running mean and termination
# --------------------------------------------------------------------------

def welford_update(mean, k, f_val):
    """Running mean after the k-th value (``k >= 1``)."""
    if k < 1:
        raise ValueError("welford_update needs k >= 1")
    return mean + (f_val - mean) / k


def should_terminate(f_mean, f_mean_prev, eps):
    """Relative change of the running mean below ``eps``.

    Falls back to the absolute change when the previous mean is exactly 0.
    """
    if f_mean_prev == 0.0:
        return abs(f_mean - f_mean_prev) < eps
    return abs((f_mean - f_mean_prev) / f_mean_prev) < eps


class WelfordTermination:
    """Run hook: stop once the running mean of ``f(x_bar_k)`` settles."""

    def __init__(self, eps=1e-5, min_iters=1):
        self.eps = eps
        self.min_iters = min_iters

    def __call__(self, report, state, recorder):
        return report.k >= self.min_iters and should_terminate(
            recorder.welford, recorder.welford_prev, self.eps
        )


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------

class TraceRecorder:
    """Computes per-iteration metrics and keeps (a thinned copy of) them."""

    def __init__(self, obj, ground_truth, n, record_every=1):
        self.obj = obj
        self.gt = ground_truth
        self.n = n
        self.every = max(1, int(record_every))
        self.rows = []
        self.welford = None
        self.welford_prev = None
        self._last = None
        f_star = ground_truth.f_star
        self._f_scale = abs(f_star) if f_star != 0 else 1.0

    def metrics(self, state):
        xb = state.x_bar
        with np.errstate(over="ignore", invalid="ignore"):
            fval = self.obj.f_bar(xb)
            dev = state.x - xb
            return {
                "k": state.k,
                "err_sq": float(((xb - self.gt.x_star) ** 2).sum()),
                "fval_rel_err": (fval - self.gt.f_star) / self._f_scale,
                "consensus_viol": float((dev * dev).sum()),
                "comm_count": state.comm_count,
                "comp_count": state.comp_count,
                "fval": fval,
            }

    def record(self, state, force=False):
        m = self.metrics(state)
        if state.k == 0:
            self.welford = m["fval"]
        else:
            self.welford_prev = self.welford
            self.welford = welford_update(self.welford, state.k, m["fval"])
        m["welford_mean"] = self.welford
        row = tuple(m[c] for c in TRACE_COLUMNS)
        self._last = row
        if force or state.k % self.every == 0:
            self.rows.append(row)
        return m

    def finalize(self, state):
        if self._last is not None and (not self.rows or self.rows[-1][0] != self._last[0]):
            self.rows.append(self._last)


@dataclass
class RunTrace:
    """Per-iteration metrics of one run plus its terminal status."""

    columns: dict
    status: str
    label: str = ""
    seed: int = 0
    final_state: object = field(default=None, repr=False)

    @classmethod
    def from_recorder(cls, rec, status, config, seed, state):
        arr = np.array(rec.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
        cols = {c: arr[:, i] for i, c in enumerate(TRACE_COLUMNS)}
        for c in ("k", "comm_count", "comp_count"):
            cols[c] = cols[c].astype(np.int64)
        label = getattr(config, "label", "")
        return cls(cols, status, label, seed, state)

    def __len__(self):
        return len(self.columns["k"])

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def diverged(self):
        return self.status == "diverged"

    @property
    def iterations(self):
        return int(self.columns["k"][-1])

    def to_csv(self, path):
        """Fixed-header CSV; floats with 17 significant digits."""
        with open(path, "w") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            cols = [self.columns[c] for c in TRACE_COLUMNS]
            for row in zip(*cols):
                fh.write(",".join(
                    str(int(v)) if c in ("k", "comm_count", "comp_count") else f"{v:.17g}"
                    for c, v in zip(TRACE_COLUMNS, row)
                ) + "\n")

    @classmethod
    def from_csv(cls, path, status="unknown", label=""):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        cols = {c: np.asarray(data[c]) for c in TRACE_COLUMNS}
        for c in ("k", "comm_count", "comp_count"):
            cols[c] = cols[c].astype(np.int64)
        return cls(cols, status, label)


def steady_state_error(trace, tail=1000, metric="err_sq"):
    """Mean of ``metric`` over the last ``tail`` rows; +inf for a diverged run."""
    if getattr(trace, "diverged", False):
        return math.inf
    values = trace[metric] if not isinstance(trace, np.ndarray) else trace
    values = np.asarray(values, dtype=float)
    if len(values) < tail:
        raise ValueError(f"trace has {len(values)} rows, fewer than tail={tail}")
    return float(values[-tail:].mean())


def cost(comm, comp, c_c, c_g):
    """Per-node cost ``c_c * #communications + c_g * #computations``."""
    if c_c < 0 or c_g < 0:
        raise ValueError("prices must be non-negative")
    return c_c * comm + c_g * comp


def trace_cost(trace, c_c, c_g):
    return cost(int(trace["comm_count"][-1]), int(trace["comp_count"][-1]), c_c, c_g)


def median_of_means(values, groups=5):
    values = np.asarray(values, dtype=float)
    groups = max(1, min(groups, len(values)))
    return float(np.median([c.mean() for c in np.array_split(values, groups)]))


# --------------------------------------------------------------------------
# Theory
# --------------------------------------------------------------------------

@dataclass
class TheoryConstants:
    """Problem, network and algorithm constants entering the bounds."""

    mu: float
    L: float
    mu_bar: float
    L_bar: float
    kappa: float
    gamma_bar: float
    nu: float
    rho: float
    D: float
    C: float
    eta: float
    theta: float
    sigma_c_sq: float
    sigma_g_sq: float
    beta: float
    n: int
    p: int
    t: int
    alpha: float
    init_err_sq: float = 0.0
    applicable: bool = True

    def as_dict(self):
        return dict(self.__dict__)


def compute_constants(obj, W, config=None, ground_truth=None, *, alpha=None, t=None,
                      sigma_c_sq=None, sigma_g_sq=None, y0=None):
    """Evaluate every constant used by the neighborhood bounds.

    ``alpha``, ``t`` and the noise levels default to those of ``config``
    (an AlgoConfig). ``y0`` defaults to the zero initializer, in which case
    the expectation in ``D`` is just the deterministic value.
    """
    from .objectives import solve_centralized

    gt = solve_centralized(obj) if ground_truth is None else ground_truth
    alpha = config.alpha if alpha is None else alpha
    t = (config.t if config is not None else 1) if t is None else t
    if sigma_c_sq is None:
        sigma_c_sq = config.comm.sigma_c_sq_bound(obj.p) if config is not None else 0.0
    if sigma_g_sq is None:
        sigma_g_sq = config.grad.sigma_g_sq_bound() if config is not None else 0.0
    beta = W.beta if hasattr(W, "beta") else _beta(np.asarray(W))
    if y0 is None:
        y0 = np.zeros((obj.n, obj.p))

    mu, L = obj.mu, obj.L
    mu_bar, L_bar = obj.mu_bar, obj.L_bar
    gamma = mu_bar * L_bar / (mu_bar + L_bar)
    applicable = alpha < min(2.0 / (mu + L), 2.0 / (mu_bar + L_bar))

    def derived(a):
        nu = 2.0 * a * mu * L / (mu + L)
        rho = 1.0 - a * gamma
        return nu, rho

    nu, rho = derived(alpha)
    if abs(beta ** 2 - rho) < 1e-9:
        warnings.warn("beta^2 == rho makes eta undefined; perturbing alpha by 1e-6 relative")
        alpha = alpha * (1.0 - 1e-6)
        nu, rho = derived(alpha)

    u = gt.u_star
    D = 2.0 * float(((y0 - u) ** 2).sum()) + 2.0 * (1.0 + 4.0 / nu ** 3) * float((u * u).sum())
    x0_bar = y0.mean(axis=0)
    return TheoryConstants(
        mu=mu, L=L, mu_bar=mu_bar, L_bar=L_bar, kappa=L / mu, gamma_bar=gamma,
        nu=nu, rho=rho, D=D, C=rho * L ** 2 / gamma ** 2,
        eta=1.0 / abs(beta ** 2 - rho), theta=max(rho, beta ** 2),
        sigma_c_sq=float(sigma_c_sq), sigma_g_sq=float(sigma_g_sq), beta=float(beta),
        n=obj.n, p=obj.p, t=int(t), alpha=float(alpha),
        init_err_sq=float(((x0_bar - gt.x_star) ** 2).sum()), applicable=bool(applicable),
    )


def _beta(w):
    lam = np.sort(np.linalg.eigvalsh(w))[::-1]
    return float(max(abs(lam[1]), abs(lam[-1])))


BOUND_VARIANTS = ("plus_Q1", "t_variant_Q1", "t_variant_Q2", "plus_Q2")


@dataclass
class NeighborhoodBound:
    """A bound value with its additive terms.

    ``groups`` sums the terms by source: gradient noise, channel noise and
    network connectivity (the initial-error transient, when present, sits
    under ``transient``).
    """

    variant: str
    value: float
    terms: dict
    groups: dict
    vacuous: bool = False
    k: int = None


def _groups(terms):
    out = {"grad_noise": 0.0, "comm_noise": 0.0, "connectivity": 0.0, "transient": 0.0}
    for name, v in terms.items():
        out[name.split(":")[0]] += v
    return out


def bound_limit(c, variant, t=None, k=None):
    """Closed-form error-neighborhood bounds on ``E||x_bar - x*||^2``.

    Variants
    --------
    plus_Q1
        lim sup for S-NEAR-DGD^+ with error-corrected consensus.
    t_variant_Q1
        lim sup for S-NEAR-DGD^t with error-corrected consensus.
    t_variant_Q2
        lim sup for S-NEAR-DGD^t with plain quantized averaging.
    plus_Q2
        bound at iteration ``k`` for S-NEAR-DGD^+ with plain quantized
        averaging; grows linearly in k when ``sigma_c > 0``.
    """
    if variant not in BOUND_VARIANTS:
        raise ValueError(f"unknown bound variant {variant!r}")
    t = c.t if t is None else t
    a, b2, rho, g, L, n, kap = c.alpha, c.beta ** 2, c.rho, c.gamma_bar, c.L, c.n, c.kappa
    sg, sc = c.sigma_g_sq, c.sigma_c_sq
    vacuous = not c.applicable or c.theta >= 1.0
    bt = b2 ** t

    if variant == "plus_Q1":
        terms = {
            "grad_noise:avg": a * sg / (n * g),
            "comm_noise:avg": 4 * rho * L ** 2 * sc / ((1 - b2) * g ** 2),
        }
    elif variant == "t_variant_Q1":
        terms = {
            "grad_noise:avg": a * sg / (n * g),
            "comm_noise:avg": 4 * rho * L ** 2 * sc / ((1 - b2) * g ** 2),
            "connectivity:D": bt * rho * L ** 2 * c.D / (n * g ** 2),
            "grad_noise:beta_t": bt * rho * (1 + kap) ** 2 * sg / (2 * g ** 2),
            "comm_noise:beta_t": bt * rho * 2 * (1 + kap) ** 2 * sc / (a ** 2 * (1 - b2) * g ** 2),
        }
    elif variant == "t_variant_Q2":
        terms = {
            "connectivity:D": bt * rho * L ** 2 * c.D / (n * g ** 2),
            "grad_noise:avg": a * sg / (n * g),
            "grad_noise:beta_t": bt * (1 + kap) ** 2 * rho * sg / (2 * g ** 2),
            "comm_noise:avg": t * sc / (n * a * g),
            "comm_noise:rho_L": rho * L ** 2 * t * sc / g ** 2,
            "comm_noise:beta_t": bt * (1 + kap) ** 2 * rho * t * sc / (2 * a ** 2 * g ** 2),
        }
    else:
        if k is None or k < 1:
            raise ValueError("plus_Q2 needs an iteration index k >= 1")
        et = c.eta * c.theta ** k
        terms = {
            "transient:init": rho ** k * c.init_err_sq,
            "connectivity:D": et * a * rho * L ** 2 * c.D / (n * g),
            "grad_noise:avg": a * sg / (n * g),
            "grad_noise:eta_theta": et * a * (1 + kap) ** 2 * rho * sg / (2 * g),
            "comm_noise:avg": (k - 1) * sc / (n * a * g),
            "comm_noise:rho_L": rho * L ** 2 * (k - 1) * sc / g ** 2,
            "comm_noise:eta_theta": et * (1 + kap) ** 2 * rho * (k - 1) * sc / (2 * a * g),
        }
    return NeighborhoodBound(variant, float(sum(terms.values())), terms, _groups(terms), vacuous, k)


def bound_at(c, variant, k, t=None):
    """k-indexed bounds including the ``rho^k`` initial-error transient.

    ``t_variant_Q1`` / ``t_variant_Q2`` add ``rho^k ||x_bar_0 - x*||^2`` to
    the limit; ``plus_Q1`` uses the ``eta theta^k`` form of the increasing
    schedule; ``plus_Q2`` is already k-indexed.
    """
    if variant == "plus_Q2":
        return bound_limit(c, variant, t, k)
    if variant == "plus_Q1":
        a, rho, g, L, n, kap = c.alpha, c.rho, c.gamma_bar, c.L, c.n, c.kappa
        et = c.eta * c.theta ** k
        terms = {
            "transient:init": rho ** k * c.init_err_sq,
            "connectivity:D": et * a * rho * L ** 2 * c.D / (n * g),
            "grad_noise:avg": a * c.sigma_g_sq / (n * g),
            "grad_noise:eta_theta": et * a * (1 + kap) ** 2 * rho * c.sigma_g_sq / (2 * g),
            "comm_noise:avg": 4 * rho * L ** 2 * c.sigma_c_sq / ((1 - c.beta ** 2) * g ** 2),
            "comm_noise:eta_theta": 2 * et * (1 + kap) ** 2 * rho * c.sigma_c_sq / (a * (1 - c.beta ** 2) * g),
        }
        vac = not c.applicable or c.theta >= 1.0
        return NeighborhoodBound(variant, float(sum(terms.values())), terms, _groups(terms), vac, k)
    lim = bound_limit(c, variant, t)
    terms = dict(lim.terms)
    terms["transient:init"] = c.rho ** k * c.init_err_sq
    return NeighborhoodBound(variant, float(sum(terms.values())), terms, _groups(terms), lim.vacuous, k)


def lemma_bounds(c, variant="Q1", t=None):
    """Auxiliary per-iteration bounds (communication, computation, iterate
    size, consensus violation, local iterates); informational only."""
    t = c.t if t is None else t
    a, b2, L, n, kap = c.alpha, c.beta ** 2, c.L, c.n, c.kappa
    sg, sc, D, C = c.sigma_g_sq, c.sigma_c_sq, c.D, c.C
    bt = b2 ** t
    kk = (1 + kap) ** 2
    if variant == "Q1":
        comm = 4 * n * sc / (1 - b2)
        y_size = D + kk * n * sg / (2 * L ** 2) + 2 * kk * n * sc / (a ** 2 * (1 - b2) * L ** 2)
        x_viol = bt * (D + kk * n * sg / (2 * L ** 2) + 2 * kk * n * sc / (a ** 2 * (1 - b2) * L ** 2)) + comm
        local_x = (2 * bt * (1 + C / n) * D + 2 * a * sg / (n * c.gamma_bar)
                   + bt * kk * (n + C) * sg / L ** 2 + 8 * (n + C) * sc / (1 - b2)
                   + 4 * bt * kk * (n + C) * sc / (a ** 2 * (1 - b2) * L ** 2))
    else:
        comm = n * t * sc
        y_size = D + kk * n * sg / (2 * L ** 2) + kk * n * t * sc / (2 * a ** 2 * L ** 2)
        x_viol = bt * y_size + comm
        local_x = (2 * bt * (1 + C / n) * D + 2 * a * sg / (n * c.gamma_bar)
                   + bt * kk * (n + C) * sg / L ** 2 + 2 * (n + C) * t * sc
                   + bt * kk * (n + C) * t * sc / (a ** 2 * L ** 2) + 2 * t * sc / (n * a * c.gamma_bar))
    return {
        "comm_error": comm,
        "comp_error": n * sg,
        "y_norm_sq": y_size,
        "x_norm_sq": y_size + comm,
        "x_consensus_viol": x_viol,
        "y_consensus_viol": y_size,
        "local_x_dist_limit": local_x,
    }
