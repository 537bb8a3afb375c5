"""Acceptance criteria 1-11.

Each test prints one ``criterion NN: PASS/FAIL`` line (collected again in the
terminal summary) and then asserts the verdict, so a failing criterion shows
up both in the summary and as a failed test.
"""

import math
import os
import time

import numpy as np
import pytest

from snear.algorithms import AlgoConfig, consensus_round, run
from snear.analysis import bound_limit, compute_constants, steady_state_error
from snear.harness import ExperimentConfig, load_preset, run_experiment
from snear.objectives import QuadraticObjective, make_quadratic, solve_centralized
from snear.operators import CommOperator, GradOperator, quantize
from snear.rng import RngStream
from snear.topology import GRAPH_KINDS, build_graph, metropolis_weights

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


@pytest.fixture(scope="module")
def gt_cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("ground_truth"))


def _median_steady(cfg, obj, W, gt, seeds, tail):
    errs = []
    for s in seeds:
        tr = run(cfg, W, obj, seed=s, ground_truth=gt)
        errs.append(steady_state_error(tr, tail))
    return float(np.median(errs))


# 1 -------------------------------------------------------------------------
def test_c01_quantizer_statistics(verdict):
    start = time.perf_counter()
    p, draws, chunk = 118, 1_000_000, 5_000
    deltas = (1, 10, 100)
    rng = RngStream(2024)
    gen = np.random.default_rng(7)
    s1 = {d: np.zeros(p) for d in deltas}
    s2 = {d: np.zeros(p) for d in deltas}
    for c in range(draws // chunk):
        x = gen.uniform(-5.0, 5.0, size=p)
        block = np.broadcast_to(x, (chunk, p))
        # the uniforms are shared by the three grids; each grid's statistics
        # are still those of independent draws
        u = rng.uniform("comm", np.arange(chunk), iteration=c, shape=p)
        for d in deltas:
            err = quantize(block, d, u) - x
            s1[d] += err.sum(axis=0)
            s2[d] += np.einsum("ij,ij->j", err, err)
    elapsed = time.perf_counter() - start
    ok, parts = True, []
    for d in deltas:
        mean = s1[d] / draws
        var = s2[d] / draws - mean ** 2
        se = np.sqrt(var / draws)
        z = np.abs(mean) / np.where(se > 0, se, np.inf)
        msq = s2[d].sum() / draws
        limit = p / (4.0 * d ** 2)
        ok &= bool(z.max() <= 4.0) and msq <= limit
        parts.append(f"delta={d}: max|z|={z.max():.2f} E|e|^2={msq:.4g}<={limit:.4g}")
    ok &= elapsed < 10.0
    verdict(1, ok, "; ".join(parts) + f"; {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------
def test_c02_consensus_matrix_invariants(verdict):
    start = time.perf_counter()
    bad = []
    for kind in GRAPH_KINDS:
        for n in range(5, 26):
            g = build_graph(kind, n, seed=n)
            W = metropolis_weights(g)
            w = W.entries
            adj = g.adjacency() | np.eye(n, dtype=bool)
            checks = (
                np.abs(w.sum(axis=0) - 1).max() <= 1e-12,
                np.abs(w.sum(axis=1) - 1).max() <= 1e-12,
                np.array_equal(w, w.T),
                W.beta < 1.0,
                np.array_equal(w != 0, adj),
                (w >= 0).all(),
            )
            if not all(checks):
                bad.append(f"{kind}/{n}")
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 5.0
    verdict(2, ok, f"{len(GRAPH_KINDS) * 21} matrices, violations: {bad or 'none'}; {elapsed:.2f}s")
    assert ok


# 3 -------------------------------------------------------------------------
def test_c03_exact_linear_convergence(verdict):
    start = time.perf_counter()
    obj = make_quadratic(5, 6, mu=1.0, L=10.0, seed=3)
    W = metropolis_weights(build_graph("complete", 5))
    alpha = 0.9 * obj.max_steplength()
    rho = 1.0 - alpha * obj.gamma_bar
    margin = 10
    budget = math.ceil(16 * math.log(10) / -math.log(rho)) + margin
    gt = solve_centralized(obj)
    tr = run(AlgoConfig("snear_dgd", alpha=alpha, t=3, max_iters=budget), W, obj, ground_truth=gt)
    e = tr["err_sq"]
    hit = np.nonzero(e <= 1e-16 * e[0])[0]
    reached = int(hit[0]) if hit.size else None
    # ratios are only meaningful above the double-precision floor
    live = np.nonzero(e[:-1] > 1e-20 * e[0])[0]
    live = live[live >= 10]
    ratios = e[live + 1] / e[live]
    worst = float(ratios.max()) if ratios.size else 0.0
    elapsed = time.perf_counter() - start
    ok = reached is not None and worst <= rho + 0.05 and elapsed < 5.0
    verdict(3, ok, f"rho={rho:.4f}, 1e-16 reached at k={reached} (budget {budget}), "
                   f"max ratio after k=10: {worst:.4f} <= {rho + 0.05:.4f}; {elapsed:.2f}s")
    assert ok


# 4 -------------------------------------------------------------------------
def test_c04_communication_error_growth(verdict):
    start = time.perf_counter()
    n, p, sigma, reps = 10, 4, 0.1, 10_000
    W = metropolis_weights(build_graph("ring", n))
    comm = CommOperator("gaussian", sigma_c=sigma)
    ts = (1, 2, 5, 10)
    y = np.random.default_rng(0).standard_normal((n, p))
    exact = {t: np.linalg.matrix_power(W.entries, t) @ y for t in ts}
    rng = RngStream(11)
    acc = {(v, t): 0.0 for v in ("Q1", "Q2") for t in ts}
    for v in ("Q1", "Q2"):
        for r in range(reps):
            x = y
            for j in range(1, max(ts) + 1):
                x = consensus_round(v, x, W, comm, rng, r, j)
                if j in ts:
                    acc[v, j] += float(((x - exact[j]) ** 2).sum())
    emp = {key: val / reps for key, val in acc.items()}
    b2 = W.beta ** 2
    q1_limit = 4 * n * sigma ** 2 / (1 - b2) * 1.1
    q1_ok = all(emp["Q1", t] <= q1_limit for t in ts) and emp["Q1", 10] / emp["Q1", 1] < 1.5
    q2_bound_ok = all(emp["Q2", t] <= n * t * sigma ** 2 * 1.1 for t in ts)
    q2_growth = emp["Q2", 10] / emp["Q2", 1]
    q2_ok = q2_bound_ok and all(emp["Q2", a] < emp["Q2", b] for a, b in zip(ts, ts[1:])) and q2_growth > 5
    elapsed = time.perf_counter() - start
    ok = q1_ok and q2_ok and elapsed < 30.0
    q1 = ", ".join(f"{emp['Q1', t]:.4f}" for t in ts)
    q2 = ", ".join(f"{emp['Q2', t]:.4f}" for t in ts)
    verdict(4, ok, f"Q1 t=1,2,5,10: {q1} (limit {q1_limit:.3f}, ratio {emp['Q1', 10] / emp['Q1', 1]:.3f}) "
                   f"[{'ok' if q1_ok else 'FAIL'}]; Q2: {q2} (ratio {q2_growth:.3f}, needs > 5, "
                   f"within ntσ²·1.1: {q2_bound_ok}) [{'ok' if q2_ok else 'FAIL'}]; {elapsed:.1f}s")
    assert ok


# 5 -------------------------------------------------------------------------
def test_c05_fig1_reproduction(verdict, gt_cache):
    start = time.perf_counter()
    base = load_preset("fig1_coarse")
    q1 = run_experiment(base.with_overrides(
        ["variants=Q1", "run.replicates=10", "run.max_iters=5000", "run.tail=1000"]),
        sweep=False, cache_dir=gt_cache)
    rows = {r["label"]: r for r in q1.aggregate()}
    finite = all(r["diverged"] == 0 and math.isfinite(r["median_err"]) for r in rows.values())
    snear, dgd = rows["snear_dgd_t5-Q1"]["median_err"], rows["dgd-Q1"]["median_err"]
    gap_ok = dgd >= 2 * snear

    # one run that stays finite already falsifies the divergence claim, so the
    # remaining seeds are only simulated while every run so far has diverged
    div = base.with_overrides(["methods=extra,diging", "variants=Q2,Q3", "run.replicates=1",
                               "run.max_iters=20000", "run.tail=1"])
    seen, survivors = [], []
    for seed in range(10):
        rep = run_experiment(div.with_overrides([f"run.seed_offset={seed}"]), sweep=False, cache_dir=gt_cache)
        for r in rep.records:
            seen.append(r)
            if r.status != "diverged":
                survivors.append(f"{r.label}/seed{r.seed} err={r.trace['err_sq'][-1]:.3g}")
        if survivors:
            break
    div_ok = not survivors
    elapsed = time.perf_counter() - start
    ok = finite and gap_ok and div_ok and elapsed < 600
    steady = ", ".join(f"{k}={v['median_err']:.3g}" for k, v in rows.items())
    verdict(5, ok, f"Q1 finite: {finite} ({steady}); DGD/S-NEAR = {dgd / snear:.2f} (needs >= 2); "
                   f"Q2/Q3 EXTRA+DIGing diverged in {len(seen) - len(survivors)}/{len(seen)} runs"
                   f"{' (not diverged: ' + '; '.join(survivors) + ')' if survivors else ''}; {elapsed:.0f}s")
    assert ok


# 6 -------------------------------------------------------------------------
def test_c06_neighborhood_monotone_in_t(verdict):
    start = time.perf_counter()
    obj = make_quadratic(10, 4, mu=1.0, L=5.0, seed=6)
    W = metropolis_weights(build_graph("ring", 10))
    gt = solve_centralized(obj)
    alpha = 0.9 * obj.max_steplength()
    comm = CommOperator("gaussian", sigma_c=0.05)
    grad = GradOperator("gaussian", sigma_g=0.05)
    med, bound = {}, {}
    for t in (1, 5):
        cfg = AlgoConfig("snear_dgd", alpha=alpha, t=t, max_iters=600, comm=comm, grad=grad)
        med[t] = _median_steady(cfg, obj, W, gt, range(30), tail=300)
        bound[t] = bound_limit(compute_constants(obj, W, cfg, gt), "t_variant_Q1").value
    elapsed = time.perf_counter() - start
    ok = med[5] <= med[1] and all(med[t] <= bound[t] for t in (1, 5)) and elapsed < 120
    verdict(6, ok, f"median steady error t=1: {med[1]:.4g} (bound {bound[1]:.4g}), "
                   f"t=5: {med[5]:.4g} (bound {bound[5]:.4g}); {elapsed:.1f}s")
    assert ok


# 7 -------------------------------------------------------------------------
def test_c07_variance_reduction_in_n(verdict):
    start = time.perf_counter()
    base = make_quadratic(1, 4, mu=1.0, L=4.0, seed=7)
    grad = GradOperator("gaussian", sigma_g=0.1)
    med = {}
    for n in (5, 25):
        obj = QuadraticObjective.replicated(base.A[0], base.b[0], n)
        W = metropolis_weights(build_graph("complete", n))
        cfg = AlgoConfig("snear_dgd", alpha=0.9 * obj.max_steplength(), t=1, max_iters=800, grad=grad)
        med[n] = _median_steady(cfg, obj, W, solve_centralized(obj), range(30), tail=400)
    ratio = med[25] / med[5]
    elapsed = time.perf_counter() - start
    ok = ratio <= 0.6 and elapsed < 120
    verdict(7, ok, f"steady error n=5: {med[5]:.4g}, n=25: {med[25]:.4g}, ratio {ratio:.3f} "
                   f"(needs <= 0.6); {elapsed:.1f}s")
    assert ok


# 8 -------------------------------------------------------------------------
def test_c08_plus_envelope(verdict):
    start = time.perf_counter()
    obj = make_quadratic(10, 4, mu=1.0, L=10.0, seed=8)
    W = metropolis_weights(build_graph("ring", 10))
    alpha = 0.9 * obj.max_steplength()
    theta = max(1 - alpha * obj.gamma_bar, W.beta ** 2)
    tr = run(AlgoConfig("snear_dgd", alpha=alpha, schedule="increasing", max_iters=150,
                        init="gaussian"), W, obj)
    e, k = tr["err_sq"], tr["k"]
    m0 = e[5] / theta ** 5
    ratio = e / (m0 * theta ** k)
    # the envelope is claimed from the fitting point on; rows below the
    # rounding floor carry no information about it
    live = (k >= 5) & (e > 1e-28 * e[0])
    worst = float(ratio[live].max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1.05 and elapsed < 10
    verdict(8, ok, f"theta={theta:.4f}, max err/(M0 theta^k) over k=5..{int(k[live][-1])} = {worst:.4f} "
                   f"(needs <= 1.05; pre-fit k<5 ratios {np.array2string(ratio[:5], precision=1)}); "
                   f"{elapsed:.2f}s")
    assert ok


# 9 -------------------------------------------------------------------------
def test_c09_q2_plus_degradation(verdict):
    start = time.perf_counter()
    obj = make_quadratic(10, 4, mu=1.0, L=10.0, seed=9)
    W = metropolis_weights(build_graph("ring", 10))
    gt = solve_centralized(obj)
    cfg = AlgoConfig("snear_dgd", alpha=0.9 * obj.max_steplength(), schedule="increasing", variant="Q2",
                     max_iters=200, comm=CommOperator("gaussian", sigma_c=0.1))
    early, late = [], []
    for s in range(30):
        e = run(cfg, W, obj, seed=s, ground_truth=gt)["err_sq"]
        early.append(e[50:101].mean())
        late.append(e[150:201].mean())
    m_early, m_late = float(np.median(early)), float(np.median(late))
    elapsed = time.perf_counter() - start
    ok = m_late > m_early and elapsed < 60
    verdict(9, ok, f"median window mean k=50..100: {m_early:.4g}, k=150..200: {m_late:.4g}; {elapsed:.1f}s")
    assert ok


# 10 ------------------------------------------------------------------------
def test_c10_cost_framework(verdict, gt_cache):
    start = time.perf_counter()
    base = load_preset("scaling").with_overrides(["graph.kind=ring", "graph.n=15"])
    cost = {}
    for t in (1, 7):
        rep = run_experiment(base.with_overrides([f"algo.t={t}"]), sweep=False, cache_dir=gt_cache)
        (row,) = rep.aggregate()
        cost[t] = (row["cost_0.01_1"], row["cost_1_1"], row["median_iters"])
    cheap_comm = cost[7][0] < cost[1][0]
    dear_comm = cost[1][1] < cost[7][1]
    elapsed = time.perf_counter() - start
    ok = cheap_comm and dear_comm and elapsed < 600
    verdict(10, ok, f"median cost over 30 seeds, c_c=0.01c_g: t=7 {cost[7][0]:.0f} vs t=1 {cost[1][0]:.0f}; "
                    f"c_c=c_g: t=1 {cost[1][1]:.0f} vs t=7 {cost[7][1]:.0f}; {elapsed:.0f}s")
    assert ok


# 11 ------------------------------------------------------------------------
def test_c11_determinism(verdict, tmp_path, gt_cache):
    configs = {
        "fig1": load_preset("fig1_coarse").with_overrides(
            ["run.replicates=2", "run.max_iters=150", "run.tail=50"]),
        "gaussian_quadratic": ExperimentConfig.from_dict({
            "objective.kind": "quadratic", "graph.kind": "ring", "graph.n": "10",
            "methods": "snear_dgd, snear_dgd_plus", "variants": "Q1, Q2", "algo.t": "5",
            "comm.kind": "gaussian", "comm.sigma_c": "0.05", "grad.kind": "gaussian",
            "grad.sigma_g": "0.05", "run.replicates": "3", "run.max_iters": "100", "run.tail": "20"}),
    }
    mismatched, files = [], 0
    for name, cfg in configs.items():
        a = run_experiment(cfg, sweep=False, cache_dir=gt_cache).write(str(tmp_path / name / "a"))
        b = run_experiment(cfg, sweep=False, cache_dir=gt_cache).write(str(tmp_path / name / "b"))
        for pa, pb in zip(a, b):
            files += 1
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                if fa.read() != fb.read():
                    mismatched.append(os.path.basename(pa))
        if len(a) != len(b):
            mismatched.append(f"{name}: {len(a)} vs {len(b)} traces")
    ok = not mismatched and files > 0
    verdict(11, ok, f"{files} trace CSVs compared byte for byte, mismatches: {mismatched or 'none'}")
    assert ok
