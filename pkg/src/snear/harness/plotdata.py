"""Plot-ready CSV series built from an :class:`ExperimentReport`.

Every file is long format: one row per point, one column naming the series,
so any plotting tool can pivot it.
"""

import os

import numpy as np

PLOT_KINDS = ("error_vs_k", "steady_by_network", "termination", "cost")


class EmptyReportError(ValueError):
    """The report holds no runs to plot."""


def _median_curve(traces, metric):
    length = min(len(t) for t in traces)
    ks = traces[0]["k"][:length]
    vals = np.median(np.vstack([t[metric][:length] for t in traces]), axis=0)
    return ks, vals


def emit_plot_data(report, kind, outdir, metric="err_sq"):
    """Write the CSV series for one figure type; returns the file path.

    Kinds
    -----
    error_vs_k
        ``series,k,value``: median over seeds of ``metric`` per iteration.
    steady_by_network
        ``network_type,n,t,label,value``: mean steady normalized f-error.
    termination
        ``network_type,n,t,label,value``: median iterations to termination.
    cost
        ``c_c,c_g,network_type,n,t,label,value``: median cost at termination.
    """
    if not report or not report.records:
        raise EmptyReportError("report has no runs")
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{kind}.csv")
    lines = []
    if kind == "error_vs_k":
        lines.append("series,k,value")
        for cell in report.cells:
            for label in report.labels():
                recs = report.by(cell.index, label)
                if not recs:
                    continue
                name = label if len(report.cells) == 1 else f"{cell.tag}/{label}"
                ks, vals = _median_curve([r.trace for r in recs], metric)
                lines += [f"{name},{k},{v:.17g}" for k, v in zip(ks, vals)]
    else:
        agg = report.aggregate()
        pairs = report.config.cost_pairs if kind == "cost" else [None]
        head = "network_type,n,t,label,value"
        lines.append(("c_c,c_g," + head) if kind == "cost" else head)
        for pair in pairs:
            for row in agg:
                cfg = report.cells[row["cell"]].config
                key = (cfg["graph.kind"], cfg["graph.n"], cfg["algo.t"], row["label"])
                if kind == "steady_by_network":
                    value = row["mean_fval"]
                elif kind == "termination":
                    value = row["median_iters"]
                else:
                    value = row[f"cost_{pair[0]:g}_{pair[1]:g}"]
                prefix = f"{pair[0]:g},{pair[1]:g}," if pair else ""
                lines.append(prefix + ",".join(str(x) for x in key) + f",{value:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
