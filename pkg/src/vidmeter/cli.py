"""``vidmeter`` command line: one subcommand per task plus pooling and analysis tools."""

from __future__ import annotations

import argparse
import sys
import warnings

from . import __version__, report
from .config import build_config, read_config_file
from .errors import VidmeterError

# subcommand -> (task it implies, pipeline)
SUBCOMMANDS = {
    "adhoc": ("adhoc", report.cmd_score_adhoc),
    "instance": ("instance", report.cmd_score_instance),
    "actev": ("actev", report.cmd_score_actev),
    "vtt": ("vtt_matching", report.cmd_score_vtt),
    "da": ("da", report.cmd_score_da),
    "pool": (None, report.cmd_pool),
    "significance": (None, report.cmd_significance),
    "correlate": (None, report.cmd_correlate),
    "score": (None, None),  # dispatches on --task
}


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("inputs")
    g.add_argument("--config", help="key=value config file; flags override its values")
    g.add_argument("--task", help="adhoc, instance, actev, vtt_matching or da")
    g.add_argument("--runs", nargs="+", help="run files or directories of run files")
    g.add_argument("--qrels", help="stratified judgments file")
    g.add_argument("--ref", help="reference activity instances")
    g.add_argument("--sys", nargs="+", help="system activity files, one per system")
    g.add_argument("--truth", help="caption matching ground truth")
    g.add_argument("--da-log", help="Direct Assessment rating log")
    g.add_argument("--run-meta", help="JSON with team, training type, novelty flag and timings per run tag")
    g.add_argument("--scores", help="long-form per_topic.csv for significance/correlate")
    g.add_argument("--metric", help="metric name to select from --scores")
    g.add_argument("--out", help="output directory (default vidmeter-out)")
    g = p.add_argument_group("parameters")
    g.add_argument("--strata", help="pool strata as lo-hi:rate,... (default 1-250:1.0,251-1000:0.111)")
    g.add_argument("--seed", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--cutoffs", help="comma-separated cutoffs for infP/infR")
    g.add_argument("--difficulty-threshold", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--iterations", type=int)
    g.add_argument("--theta", type=float)
    g.add_argument("--naudc-limit", type=float)
    g.add_argument("--rfa-point", type=float)
    g.add_argument("--novelty-table", action="store_true", default=None)
    g.add_argument("--threads", type=int, help="worker threads (default VIDMETER_THREADS or 1)")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="vidmeter", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vidmeter {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    helps = {
        "adhoc": "score ad-hoc search runs (xinfAP, infP/infR, novelty, overlap)",
        "instance": "score instance search runs (AP/MAP, judging statistics)",
        "actev": "score activity detection systems (nAUDC, PR.15, DET curves)",
        "vtt": "score caption matching submissions (mean inverted rank)",
        "da": "standardise Direct Assessment ratings",
        "pool": "build, stratify and sample the judging pool",
        "significance": "pairwise randomization tests and significance groups",
        "correlate": "Pearson correlation between metrics",
        "score": "score the task named by --task",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    synth = sub.add_parser("synth", help="write a seeded synthetic ad-hoc dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n-runs", type=int, default=47)
    synth.add_argument("--n-topics", type=int, default=30)
    return parser


def config_from_args(args):
    file_values = read_config_file(args.config) if args.config else {}
    implied, _ = SUBCOMMANDS[args.command]
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if implied is not None:
        if overrides.get("task") not in (None, implied):
            raise VidmeterError(f"subcommand {args.command!r} scores task {implied!r}, not {overrides['task']!r}")
        overrides["task"] = implied
    return build_config(file_values, overrides)


def run(args):
    if args.command == "synth":
        from .synth import generate_adhoc, write_adhoc
        write_adhoc(generate_adhoc(n_runs=args.n_runs, n_topics=args.n_topics, seed=args.seed), args.out)
        return None
    cfg = config_from_args(args)
    _, fn = SUBCOMMANDS[args.command]
    if fn is None:
        fn = report.COMMANDS[cfg.task]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = fn(cfg)
    for w in caught:
        print(f"vidmeter: warning: {w.message}", file=sys.stderr)
    for w in rep.warnings:
        print(f"vidmeter: warning: {w}", file=sys.stderr)
    rep.write(cfg.out)
    return rep


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (VidmeterError, OSError, ValueError) as exc:
        print(f"vidmeter: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
