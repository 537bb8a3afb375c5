"""Built-in experiment configurations.

The synthetic stand-in for the mushrooms data has 14 feature clusters in
file order and is sharded without a shuffle, so neighbouring nodes hold
differently distributed samples. Point ``data.path`` at a LIBSVM file
(with ``data.label_map = 1:1,2:-1`` for mushrooms) to use real data.
"""

from .config import ConfigError, ExperimentConfig

_FIG1 = """
name = {name}
objective.kind = logistic
data.M = 500
data.p = 20
data.seed = 0
data.clusters = 14
data.shift = 3.0
data.shuffle = false
graph.kind = erdos_renyi
graph.n = 14
graph.p_edge = 0.5
graph.seed = 0
methods = snear_dgd, dgd, extra, diging
variants = Q1, Q2, Q3
algo.alpha_frac = 0.9
algo.t = 5
comm.kind = quantizer
comm.delta = {delta}
grad.kind = minibatch
grad.batch = 16
run.replicates = 30
run.max_iters = 20000
run.tail = 1000
run.record_every = 1
"""

_SCALING = """
name = scaling
objective.kind = logistic
data.M = 500
data.p = 20
data.seed = 0
data.clusters = 14
data.shift = 3.0
data.shuffle = false
graph.kind = ring
graph.n = 5
graph.p_edge = 0.4
graph.k = 4
methods = snear_dgd
variants = Q1
algo.alpha_frac = 0.9
comm.kind = quantizer
comm.delta = 100
grad.kind = minibatch
grad.batch = 16
run.replicates = 30
run.max_iters = 20000
run.eps = 1e-5
run.tail = 1000
cost.pairs = 1:1, 0.01:1
sweep.graph.kind = complete, erdos_renyi, k_cyclic, ring, path
sweep.graph.n = 5, 10, 15, 20, 25
sweep.algo.t = 1, 7
"""

_QUADRATIC_SMALL = """
name = quadratic_small
objective.kind = quadratic
quad.p = 4
quad.seed = 0
graph.kind = ring
graph.n = 5
methods = snear_dgd
variants = Q1
algo.alpha_frac = 0.9
algo.t = 3
run.replicates = 1
run.max_iters = 200
run.tail = 50
"""

PRESETS = {
    "fig1_coarse": (_FIG1.format(name="fig1_coarse", delta=10),
                    "all methods x Q1/Q2/Q3, quantizer delta=10, B=16, 14-node random graph"),
    "fig1_fine": (_FIG1.format(name="fig1_fine", delta=100000),
                  "as fig1_coarse with delta=1e5"),
    "scaling": (_SCALING, "5 network types x n in {5..25} x t in {1,7}, delta=100, Welford eps=1e-5"),
    "quadratic_small": (_QUADRATIC_SMALL, "5-node ring, random quadratic, exact operators"),
}


def preset_text(name):
    try:
        return PRESETS[name][0].lstrip()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def load_preset(name):
    return ExperimentConfig.from_text(preset_text(name), source=f"preset:{name}")
