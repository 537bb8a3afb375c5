"""Command line interface.

Exit codes: 0 success (a diverged run is a result, not a failure),
1 configuration error, 2 internal error.
"""

import argparse
import math
import os
import sys
import warnings

from ..objectives import ParameterError as ObjectiveParameterError
from ..objectives import ParseError
from ..topology import GenerationError
from ..topology import ParameterError as GraphParameterError
from .config import ConfigError, ExperimentConfig
from .plotdata import emit_plot_data
from .presets import PRESETS, load_preset, preset_text
from .runner import WORKERS_ENV, build_cells, run_experiment, write_bounds

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2
_CONFIG_ERRORS = (ConfigError, ParseError, ObjectiveParameterError, GraphParameterError, GenerationError)


def _load(args):
    if args.preset and args.config:
        raise ConfigError("give either a config file or --preset, not both")
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = ExperimentConfig.from_file(args.config)
    else:
        raise ConfigError("no config given (path or --preset NAME)")
    return cfg.with_overrides(args.set) if args.set else cfg


def _outdir(args, cfg):
    return args.out or cfg["output.dir"]


def _g(v):
    return "inf" if v == math.inf else f"{v:.4g}"


def _print_summary(report, out):
    for row in report.aggregate():
        where = " ".join(f"{k.split('.')[-1]}={row[k]}" for k in report.cells[row["cell"]].params)
        status = f" DIVERGED {row['diverged']}/{row['runs']}" if row["diverged"] else ""
        out.write(f"{where + ' ' if where else ''}{row['label']}: median steady err {_g(row['median_err'])}"
                  f", median iters {row['median_iters']:g}{status}\n")


def cmd_run(args, sweep=False):
    cfg = _load(args)
    outdir = _outdir(args, cfg)
    report = run_experiment(cfg, sweep=sweep, workers=args.workers, cache_dir=outdir)
    paths = report.write(outdir)
    for note in report.notes:
        print(f"warning: {note}", file=sys.stderr)
    _print_summary(report, sys.stdout)
    if sweep:
        for kind in ("steady_by_network", "termination", "cost"):
            emit_plot_data(report, kind, os.path.join(outdir, "plots"))
    else:
        emit_plot_data(report, "error_vs_k", os.path.join(outdir, "plots"))
    print(f"wrote {len(paths)} traces to {os.path.join(outdir, 'traces')}")
    return EXIT_OK


def cmd_compare(args):
    return cmd_run(args, sweep=False)


def cmd_bounds(args):
    cfg = _load(args)
    cells = build_cells(cfg, sweep=False, cache_dir=args.out)
    from .runner import ExperimentReport

    rows = ExperimentReport(cfg, cells, []).bounds_table(sigma_g_draws=args.sigma_draws)
    if not rows:
        print("no S-NEAR-DGD method with a Q1/Q2 variant in this config")
    for row in rows:
        flag = " (vacuous)" if row["vacuous"] else ""
        print(f"{row['label']} [{row['variant']}] bound = {row['bound']:.6g}{flag}")
        for k, v in row.items():
            if k.startswith("term:"):
                print(f"    {k[5:]:<28} {v:.6g}")
    if args.out and rows:
        path = write_bounds(rows, args.out)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_presets(args):
    if args.show:
        sys.stdout.write(preset_text(args.show))
        return EXIT_OK
    for name, (_, desc) in PRESETS.items():
        print(f"{name:<16} {desc}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="snear", description="S-NEAR-DGD simulation harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory (default: output.dir)"):
        sp.add_argument("config", nargs="?", help="config file")
        sp.add_argument("--preset", help="built-in config name")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${WORKERS_ENV} or 1)")

    common(sub.add_parser("run", help="run one config (sweep keys ignored)"))
    common(sub.add_parser("sweep", help="run the full sweep grid"))
    common(sub.add_parser("compare", help="multi-method comparison with error curves"))
    b = sub.add_parser("bounds", help="print theoretical neighborhood bounds")
    common(b, out_help="directory for bounds.txt and the ground-truth cache")
    b.add_argument("--sigma-draws", type=int, default=10_000,
                   help="draws for the minibatch variance estimate")
    ps = sub.add_parser("presets", help="list built-in configs")
    ps.add_argument("--show", help="print one preset")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    handlers = {
        "run": cmd_run,
        "sweep": lambda a: cmd_run(a, sweep=True),
        "compare": cmd_compare,
        "bounds": cmd_bounds,
        "presets": cmd_presets,
    }
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return handlers[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
