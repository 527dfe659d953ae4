"""Command-line entry point: ``redsim run | compare | import-topology | plot``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .rocketfuel import cch_to_topology_text
from .runner import compare_inca_smartre, run_matrix, write_comparison, write_report
from .topology import TopologyError, load_topology


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "requests", None) is not None:
        out["n_requests"] = args.requests
    if getattr(args, "seeds", None):
        out["seeds"] = args.seeds
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    rows = run_matrix(cfg, out_dir=args.out, parallel=args.parallel,
                      fulfillment_logs=args.fulfillment_logs)
    if args.out is None:
        write_report(rows, sys.stdout)
    else:
        print(f"wrote {len(rows)} rows to {Path(args.out) / 'report.csv'}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    rows = compare_inca_smartre(cfg, parallel=args.parallel)
    write_comparison(rows, args.out if args.out else sys.stdout)
    return 0


def cmd_import(args) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    if args.input.endswith(".cch"):
        text = cch_to_topology_text(text, args.level, args.name or Path(args.input).stem)
    # round-trip through the loader so malformed input fails here, not later
    load_topology(text, level=args.level)
    Path(args.output).write_text(text, encoding="utf-8")
    return 0


def cmd_plot(args) -> int:
    import matplotlib  # optional; only this subcommand needs it
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(args.report, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["seed"] == "mean"]
    if not rows:
        raise ValueError(f"{args.report} has no aggregate rows")
    series: dict[tuple, list] = {}
    for r in rows:
        series.setdefault((r["topology"], r["policy"], r["alpha"]), []).append(
            (int(r["cache_chunks"]), float(r[args.metric])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (topo, policy, alpha), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=f"{topo} {policy} a={alpha}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("cache size per CR (chunks)")
    ax.set_ylabel(args.metric.replace("_", " "))
    ax.legend(fontsize=7)
    fig.tight_layout()
    out = args.out or str(Path(args.report).with_suffix(".svg"))
    fig.savefig(out, format="svg")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="redsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario matrix")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (default: CSV on stdout)")
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--requests", type=int, default=None, help="override n_requests")
    run.add_argument("--seeds", type=int, nargs="+", default=None)
    run.add_argument("--fulfillment-logs", action="store_true",
                     help="also export per-request fulfillment and trace CSVs")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="INCA vs SmartRE footprint table")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--out", default=None)
    cmp_.add_argument("--parallel", type=int, default=1)
    cmp_.add_argument("--requests", type=int, default=None)
    cmp_.add_argument("--seeds", type=int, nargs="+", default=None)
    cmp_.set_defaults(func=cmd_compare)

    imp = sub.add_parser("import-topology", help="convert a .cch map or validate an edge list")
    imp.add_argument("input")
    imp.add_argument("output")
    imp.add_argument("--level", choices=("pop", "router"), default="pop")
    imp.add_argument("--name", default=None)
    imp.set_defaults(func=cmd_import)

    plot = sub.add_parser("plot", help="SVG line plot of a report")
    plot.add_argument("--report", required=True)
    plot.add_argument("--metric", default="hit_rate",
                      choices=("hit_rate", "footprint_reduction", "bandwidth_savings"))
    plot.add_argument("--out", default=None)
    plot.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, ValueError, OSError, RuntimeError) as exc:
        print(f"redsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
