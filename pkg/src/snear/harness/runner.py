"""Seeded replicate sweeps and their aggregation.

A sweep is a list of independent jobs ``(cell, method config, seed)``.
Jobs run in a process pool when more than one worker is configured
(``SNEAR_WORKERS`` or the ``workers`` argument); the results are reduced in
job order, so the report does not depend on scheduling.
"""

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..algorithms import SteplengthWarning, run
from ..analysis import (
    WelfordTermination,
    bound_at,
    bound_limit,
    compute_constants,
    median_of_means,
    steady_state_error,
    trace_cost,
)
from ..operators import estimate_sigma_g_sq
from ..rng import RngStream
from .cache import ground_truth

WORKERS_ENV = "SNEAR_WORKERS"


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class Cell:
    """One point of the sweep grid with its built problem."""

    index: int
    params: dict
    config: object
    obj: object
    W: object
    gt: object
    algos: list

    @property
    def tag(self):
        if not self.params:
            return "base"
        return "_".join(f"{k.split('.')[-1]}-{v}" for k, v in self.params.items())


@dataclass
class RunRecord:
    cell: int
    label: str
    seed: int
    status: str
    iterations: int
    steady_err: float
    steady_fval: float
    costs: dict
    trace: object = field(repr=False, default=None)


@dataclass
class ExperimentReport:
    """Raw traces of every job plus everything derived from them."""

    config: object
    cells: list
    records: list
    notes: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.records)

    def header(self):
        c = self.config
        return [
            f"name: {c['name']}",
            f"replicates: {c['run.replicates']} seeds ({c.seeds[0]}..{c.seeds[-1]})",
            f"cells: {len(self.cells)}",
            f"runs: {len(self.records)}",
        ] + [f"note: {n}" for n in self.notes]

    def by(self, cell=None, label=None):
        return [r for r in self.records
                if (cell is None or r.cell == cell) and (label is None or r.label == label)]

    def labels(self):
        seen = []
        for r in self.records:
            if r.label not in seen:
                seen.append(r.label)
        return seen

    def aggregate(self):
        """One row per (cell, method label), reduced over seeds."""
        rows = []
        for cell in self.cells:
            for label in self.labels():
                recs = self.by(cell.index, label)
                if not recs:
                    continue
                errs = np.array([r.steady_err for r in recs])
                fvals = np.array([r.steady_fval for r in recs])
                finite = errs[np.isfinite(errs)]
                row = dict(cell.params)
                row.update(
                    cell=cell.index, label=label, runs=len(recs),
                    diverged=sum(r.status == "diverged" for r in recs),
                    median_err=float(np.median(errs)),
                    mean_err=float(finite.mean()) if finite.size else math.inf,
                    mom_err=median_of_means(finite) if finite.size else math.inf,
                    median_fval=float(np.median(fvals)),
                    mean_fval=float(fvals[np.isfinite(fvals)].mean()) if np.isfinite(fvals).any() else math.inf,
                    median_iters=float(np.median([r.iterations for r in recs])),
                )
                for pair in self.config.cost_pairs:
                    row[f"cost_{pair[0]:g}_{pair[1]:g}"] = float(np.median([r.costs[pair] for r in recs]))
                rows.append(row)
        return rows

    def bounds_table(self, sigma_g_draws=10_000):
        """Theory bounds next to the empirical median, S-NEAR-DGD runs only."""
        rows = []
        for cell in self.cells:
            for algo in cell.algos:
                if algo.method != "snear_dgd" or algo.variant == "Q3":
                    continue
                variant = _bound_variant(algo)
                sg = algo.grad.sigma_g_sq_bound()
                if sg != sg:
                    sg = estimate_sigma_g_sq(algo.grad, cell.obj, np.zeros(cell.obj.p),
                                             RngStream(0), draws=sigma_g_draws)
                c = compute_constants(cell.obj, cell.W, algo, cell.gt, sigma_g_sq=sg)
                if variant == "plus_Q2":
                    b = bound_at(c, variant, max(1, algo.max_iters))
                else:
                    b = bound_limit(c, variant)
                emp = [r.steady_err for r in self.by(cell.index, algo.label)]
                row = dict(cell.params)
                row.update(cell=cell.index, label=algo.label, variant=variant, bound=b.value,
                           vacuous=b.vacuous, empirical_median=float(np.median(emp)) if emp else math.nan)
                row.update({f"term:{k}": v for k, v in b.terms.items()})
                rows.append(row)
        return rows

    def write(self, outdir):
        """Trace CSVs, summary tables and the report header under ``outdir``."""
        os.makedirs(os.path.join(outdir, "traces"), exist_ok=True)
        paths = []
        for r in self.records:
            cell = self.cells[r.cell]
            path = os.path.join(outdir, "traces", f"{cell.tag}__{r.label}__seed{r.seed}.csv")
            r.trace.to_csv(path)
            paths.append(path)
        _write_rows(os.path.join(outdir, "runs.csv"), [
            dict(self.cells[r.cell].params, cell=r.cell, label=r.label, seed=r.seed, status=r.status,
                 iterations=r.iterations, steady_err=r.steady_err, steady_fval=r.steady_fval,
                 **{f"cost_{p[0]:g}_{p[1]:g}": v for p, v in r.costs.items()})
            for r in self.records
        ])
        _write_rows(os.path.join(outdir, "summary.csv"), self.aggregate())
        with open(os.path.join(outdir, "report.txt"), "w") as fh:
            fh.write("\n".join(self.header()) + "\n")
        with open(os.path.join(outdir, "config.txt"), "w") as fh:
            fh.write(self.config.to_text())
        return paths


def write_bounds(rows, outdir):
    """``bounds.txt``: one ``key: value`` block per row of a bounds table."""
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "bounds.txt")
    with open(path, "w") as fh:
        for i, row in enumerate(rows):
            if i:
                fh.write("\n")
            for k, v in row.items():
                fh.write(f"{k}: {_fmt(v)}\n")
    return path


def _bound_variant(algo):
    prefix = "plus" if algo.schedule == "increasing" else "t_variant"
    return f"{prefix}_{'Q1' if algo.variant == 'Q1' else 'Q2'}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _write_rows(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r.get(k, "")) for k in keys) + "\n")


def build_cells(config, sweep=True, cache_dir=None):
    """Build problem, network and ground truth for every grid point."""
    grid = config.cells() if sweep else [({}, config)]
    cells = []
    for i, (params, cfg) in enumerate(grid):
        obj = cfg.build_objective()
        W = cfg.build_matrix()
        gt = ground_truth(obj, cache_dir)
        cells.append(Cell(i, params, cfg, obj, W, gt, cfg.algo_configs(obj)))
    return cells


def check_steplengths(cells):
    """Steplength check for every method config; returns readable notes."""
    notes = []
    for cell in cells:
        for algo in cell.algos:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", SteplengthWarning)
                algo.check_steplength(cell.obj)
            for w in caught:
                notes.append(f"cell {cell.tag} {algo.label}: {w.message}")
    return notes


def _run_job(job):
    cell_index, algo, W, obj, gt, seed, eps, tail, every, pairs = job
    hooks = (WelfordTermination(eps),) if eps > 0 else ()
    trace = run(algo, W, obj, seed=seed, hooks=hooks, ground_truth=gt, record_every=every)
    trace.final_state = None
    window = min(tail, len(trace))
    return RunRecord(
        cell=cell_index, label=algo.label, seed=seed, status=trace.status,
        iterations=trace.iterations,
        steady_err=steady_state_error(trace, window, "err_sq"),
        steady_fval=steady_state_error(trace, window, "fval_rel_err"),
        costs={p: trace_cost(trace, *p) for p in pairs},
        trace=trace,
    )


def run_experiment(config, sweep=True, workers=None, cache_dir=None, cells=None):
    """Run every (cell, method, seed) job of ``config``.

    Parameters
    ----------
    config : ExperimentConfig
    sweep : bool
        Expand ``sweep.*`` keys into a grid; otherwise run the base config.
    workers : int, optional
        Process count; defaults to ``$SNEAR_WORKERS`` or 1.
    cache_dir : str, optional
        Ground-truth cache directory.
    cells : list of Cell, optional
        Prebuilt cells (skips problem construction).

    Returns
    -------
    ExperimentReport
    """
    cells = build_cells(config, sweep, cache_dir) if cells is None else cells
    notes = check_steplengths(cells)
    for n in notes:
        warnings.warn(n, SteplengthWarning, stacklevel=2)
    jobs = [
        (cell.index, algo, cell.W, cell.obj, cell.gt, seed, cell.config["run.eps"],
         cell.config["run.tail"], cell.config["run.record_every"], tuple(config.cost_pairs))
        for cell in cells for algo in cell.algos for seed in config.seeds
    ]
    n_workers = worker_count(workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        records = [_run_job(j) for j in jobs]
    return ExperimentReport(config, cells, records, notes)
