"""Experiment configuration: a flat ``key = value`` text format.

Lines look like ``section.name = value``; ``#`` starts a comment. Keys
under ``sweep.`` name another key and give a comma-separated list of
values, which :meth:`ExperimentConfig.cells` expands into a grid.

Schema (defaults in :data:`SCHEMA`)::

    name                     free-form label
    objective.kind           quadratic | logistic
    quad.p quad.mu quad.L quad.seed quad.spread quad.b_scale
    quad.identical           same (A, b) on every node
    data.path                LIBSVM file; empty means synthetic data
    data.label_map           e.g. "1:1,2:-1"
    data.M data.p data.seed data.flip data.scale data.clusters data.shift
    data.shuffle             shuffle samples before sharding
    graph.kind graph.n graph.seed graph.k graph.p_edge
    methods                  list of snear_dgd, snear_dgd_plus, dgd, extra, diging
    variants                 list of Q1, Q2, Q3
    algo.alpha               absolute steplength (wins over alpha_frac)
    algo.alpha_frac          fraction of min{2/(mu+L), 2/(mu_bar+L_bar)}
    algo.t algo.init algo.init_scale
    comm.kind comm.delta comm.sigma_c
    grad.kind grad.sigma_g grad.batch grad.sigma_g_sq
    run.replicates run.seed_offset run.max_iters run.eps run.tail run.record_every
    cost.pairs               list of c_c:c_g
    output.dir
"""

import os
from dataclasses import dataclass, field

from ..algorithms import VARIANTS, AlgoConfig
from ..objectives import (
    QuadraticObjective,
    load_libsvm,
    make_logistic,
    make_quadratic,
    synthetic_logistic,
)
from ..operators import COMM_KINDS, GRAD_KINDS, CommOperator, GradOperator
from ..topology import GRAPH_KINDS, build_graph, metropolis_weights


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    if isinstance(text, (list, tuple)):
        return [str(v).strip() for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


# key -> (parser, default)
SCHEMA = {
    "name": (str, "experiment"),
    "objective.kind": (str, "quadratic"),
    "quad.p": (int, 4),
    "quad.mu": (float, 1.0),
    "quad.L": (float, 10.0),
    "quad.seed": (int, 0),
    "quad.spread": (float, 0.0),
    "quad.b_scale": (float, 1.0),
    "quad.identical": (_bool, False),
    "data.path": (str, ""),
    "data.label_map": (str, ""),
    "data.M": (int, 500),
    "data.p": (int, 20),
    "data.seed": (int, 0),
    "data.flip": (float, 0.05),
    "data.scale": (float, 1.0),
    "data.clusters": (int, 1),
    "data.shift": (float, 0.0),
    "data.shuffle": (_bool, True),
    "graph.kind": (str, "ring"),
    "graph.n": (int, 5),
    "graph.seed": (int, 0),
    "graph.k": (int, 4),
    "graph.p_edge": (float, 0.5),
    "methods": (_list, ["snear_dgd"]),
    "variants": (_list, ["Q1"]),
    "algo.alpha": (float, 0.0),
    "algo.alpha_frac": (float, 0.9),
    "algo.t": (int, 1),
    "algo.init": (str, "zeros"),
    "algo.init_scale": (float, 1.0),
    "comm.kind": (str, "exact"),
    "comm.delta": (int, 0),
    "comm.sigma_c": (float, 0.0),
    "grad.kind": (str, "exact"),
    "grad.sigma_g": (float, 0.0),
    "grad.batch": (int, 0),
    "grad.sigma_g_sq": (float, float("nan")),
    "run.replicates": (int, 30),
    "run.seed_offset": (int, 0),
    "run.max_iters": (int, 1000),
    "run.eps": (float, 0.0),
    "run.tail": (int, 100),
    "run.record_every": (int, 1),
    "cost.pairs": (_list, ["1:1", "0.01:1"]),
    "output.dir": (str, "out"),
}

METHOD_TOKENS = ("snear_dgd", "snear_dgd_plus", "dgd", "extra", "diging")


def _format(value):
    if isinstance(value, list):
        return ", ".join(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``values`` holds every schema key; ``sweep`` maps keys to the lists of
    values to cross.
    """

    values: dict
    sweep: dict = field(default_factory=dict)

    # construction ---------------------------------------------------------
    @classmethod
    def from_text(cls, text, source="<config>"):
        raw, sweep = {}, {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("sweep."):
                sweep[key[len("sweep."):]] = value
            else:
                raw[key] = value
        return cls.from_dict(raw, sweep, source)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, source=str(path))

    @classmethod
    def from_dict(cls, raw, sweep=None, source="<config>"):
        values = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in SCHEMA.items()}
        for key, value in raw.items():
            values[key] = _parse(key, value, source)
        parsed_sweep = {}
        for key, value in (sweep or {}).items():
            if key not in SCHEMA:
                raise ConfigError(f"{source}: unknown sweep key {key!r}")
            items = value if isinstance(value, list) else _list(value)
            if not items:
                raise ConfigError(f"{source}: empty sweep list for {key!r}")
            parsed_sweep[key] = [_parse(key, v, source) for v in items]
        cfg = cls(values, parsed_sweep)
        cfg.validate(source)
        return cfg

    def with_overrides(self, overrides):
        """Copy with ``key=value`` strings applied on top."""
        raw = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must be key=value, got {item!r}")
            k, v = (s.strip() for s in item.split("=", 1))
            raw[k] = v
        merged = dict(self.values)
        for k, v in raw.items():
            merged[k] = _parse(k, v, "<override>")
        cfg = ExperimentConfig(merged, dict(self.sweep))
        cfg.validate("<override>")
        return cfg

    def to_text(self):
        lines = [f"{k} = {_format(self.values[k])}" for k in SCHEMA]
        lines += [f"sweep.{k} = {_format([_format(v) for v in vs])}" for k, vs in self.sweep.items()]
        return "\n".join(lines) + "\n"

    def __getitem__(self, key):
        return self.values[key]

    # validation -------------------------------------------------------------
    def validate(self, source="<config>"):
        v = self.values

        def need(cond, msg):
            if not cond:
                raise ConfigError(f"{source}: {msg}")

        need(v["objective.kind"] in ("quadratic", "logistic"), f"objective.kind {v['objective.kind']!r}")
        need(v["graph.kind"] in GRAPH_KINDS, f"graph.kind must be one of {GRAPH_KINDS}")
        need(v["graph.n"] >= 2, "graph.n must be >= 2")
        need(v["methods"], "methods list is empty")
        for m in v["methods"]:
            need(m in METHOD_TOKENS, f"unknown method {m!r}; expected {METHOD_TOKENS}")
        need(v["variants"], "variants list is empty")
        for q in v["variants"]:
            need(q in VARIANTS, f"unknown variant {q!r}")
        need(v["comm.kind"] in COMM_KINDS, f"comm.kind must be one of {COMM_KINDS}")
        need(v["grad.kind"] in GRAD_KINDS, f"grad.kind must be one of {GRAD_KINDS}")
        need(v["comm.kind"] != "quantizer" or v["comm.delta"] >= 1, "quantizer needs comm.delta >= 1")
        need(v["grad.kind"] != "minibatch" or v["grad.batch"] >= 1, "minibatch needs grad.batch >= 1")
        need(v["grad.kind"] != "minibatch" or v["objective.kind"] == "logistic",
             "minibatch gradients need a data-backed (logistic) objective")
        need(v["algo.alpha"] > 0 or v["algo.alpha_frac"] > 0, "need algo.alpha or algo.alpha_frac > 0")
        need(v["algo.t"] >= 1, "algo.t must be >= 1")
        need(v["run.replicates"] >= 1, "run.replicates must be >= 1 (seed list nonempty)")
        need(v["run.max_iters"] >= 0, "run.max_iters must be >= 0")
        need(v["run.tail"] >= 1, "run.tail must be >= 1")
        need(not v["data.path"] or os.path.exists(v["data.path"]), f"data.path {v['data.path']!r} not found")
        for pair in v["cost.pairs"]:
            need(_cost_pair(pair) is not None, f"bad cost pair {pair!r}; expected c_c:c_g")

    # derived objects ---------------------------------------------------------
    @property
    def seeds(self):
        off = self.values["run.seed_offset"]
        return list(range(off, off + self.values["run.replicates"]))

    @property
    def cost_pairs(self):
        return [_cost_pair(p) for p in self.values["cost.pairs"]]

    def cells(self):
        """Configs for every point of the sweep grid (just ``[self]`` without one)."""
        cells = [dict()]
        for key, vals in self.sweep.items():
            cells = [dict(c, **{key: val}) for c in cells for val in vals]
        out = []
        for c in cells:
            merged = dict(self.values)
            merged.update(c)
            cfg = ExperimentConfig(merged)
            cfg.validate("<sweep cell>")
            out.append((c, cfg))
        return out

    def build_objective(self):
        v = self.values
        n = v["graph.n"]
        if v["objective.kind"] == "quadratic":
            if v["quad.identical"]:
                one = make_quadratic(1, v["quad.p"], v["quad.mu"], v["quad.L"], v["quad.seed"],
                                     v["quad.spread"], v["quad.b_scale"])
                return QuadraticObjective.replicated(one.A[0], one.b[0], n)
            return make_quadratic(n, v["quad.p"], v["quad.mu"], v["quad.L"], v["quad.seed"],
                                  v["quad.spread"], v["quad.b_scale"])
        if v["data.path"]:
            ds = load_libsvm(v["data.path"], label_map=v["data.label_map"] or None)
        else:
            ds = synthetic_logistic(v["data.M"], v["data.p"], v["data.seed"], v["data.flip"],
                                    v["data.scale"], v["data.clusters"], v["data.shift"])
        return make_logistic(ds, n, seed=v["data.seed"], shuffle=v["data.shuffle"])

    def build_matrix(self):
        v = self.values
        g = build_graph(v["graph.kind"], v["graph.n"], seed=v["graph.seed"], k=v["graph.k"],
                        p_edge=v["graph.p_edge"])
        return metropolis_weights(g)

    def comm_operator(self):
        v = self.values
        return CommOperator(v["comm.kind"], v["comm.delta"], v["comm.sigma_c"])

    def grad_operator(self):
        v = self.values
        s2 = v["grad.sigma_g_sq"]
        return GradOperator(v["grad.kind"], v["grad.sigma_g"], v["grad.batch"],
                            None if s2 != s2 else s2)

    def alpha(self, obj):
        v = self.values
        return v["algo.alpha"] if v["algo.alpha"] > 0 else v["algo.alpha_frac"] * obj.max_steplength()

    def algo_configs(self, obj):
        """One AlgoConfig per (method, variant), in config order."""
        v = self.values
        base = dict(alpha=self.alpha(obj), t=v["algo.t"], max_iters=v["run.max_iters"],
                    comm=self.comm_operator(), grad=self.grad_operator(),
                    init=v["algo.init"], init_scale=v["algo.init_scale"])
        out = []
        for m in v["methods"]:
            for q in v["variants"]:
                if m == "snear_dgd_plus":
                    out.append(AlgoConfig("snear_dgd", schedule="increasing", variant=q, **base))
                else:
                    out.append(AlgoConfig(m, variant=q, **{**base, "t": base["t"] if m == "snear_dgd" else 1}))
        return out


def _cost_pair(text):
    try:
        c_c, c_g = (float(s) for s in str(text).split(":"))
    except ValueError:
        return None
    return (c_c, c_g) if c_c >= 0 and c_g >= 0 else None


def _parse(key, value, source):
    if key not in SCHEMA:
        raise ConfigError(f"{source}: unknown key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad value for {key}: {value!r} ({exc})") from None


