"""Command-line entry point: ``bench run | sachs | semisynth``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import BenchConfig, load_preset, load_sachs, run_benchmark, run_sachs, run_semisynthetic
from .errors import FormatError, ParameterError
from .graph import read_edge_list


def _common(p: argparse.ArgumentParser):
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--format", dest="formats", action="append", choices=["csv", "md", "json"],
                   help="summary table format (repeatable; default csv and md)")
    p.add_argument("--trace", action="store_true", help="write per-iteration solver traces")
    p.add_argument("--no-runtime", action="store_true", help="write 0 for runtimes (byte-stable reruns)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Linear causal discovery benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark config")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML or JSON config file")
    src.add_argument("--preset", help="bundled preset name, e.g. paper-er2-d10")
    run.add_argument("--reps", type=int, default=None, help="override reps")
    _common(run)

    sachs = sub.add_parser("sachs", help="evaluate learners on the real Sachs data")
    sachs.add_argument("--data", default=None, help="CSV with the 11 Sachs columns (default: bundled)")
    sachs.add_argument("--learner", action="append", default=None, help="learner method (repeatable)")
    sachs.add_argument("--log1p", action="store_true", help="log(1+x) transform before fitting")
    _common(sachs)

    semi = sub.add_parser("semisynth", help="synthetic linear data on a fixed graph")
    semi.add_argument("--graph", default=None, help="edge-list file (default: bundled Sachs graph)")
    semi.add_argument("--config", default=None, help="config for scenarios/learners/reps")
    _common(semi)
    return parser


def _apply_overrides(cfg: BenchConfig, args) -> BenchConfig:
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out = args.out
    if args.no_runtime:
        cfg.record_runtime = False
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise ParameterError("reps must be >= 1")
        cfg.reps = args.reps
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    formats = tuple(args.formats or ("csv", "md"))
    try:
        if args.command == "run":
            cfg = BenchConfig.from_file(args.config) if args.config else load_preset(args.preset)
            report = run_benchmark(_apply_overrides(cfg, args), formats, args.trace)
        elif args.command == "sachs":
            data, truth = load_sachs(args.data, log1p=args.log1p)
            learners = args.learner or ["Dagma", "Random"]
            report = run_sachs(data, truth, learners, args.out or "results/sachs", formats, args.trace,
                               record_runtime=not args.no_runtime)
        else:
            truth = read_edge_list(args.graph) if args.graph else load_sachs()[1]
            cfg = BenchConfig.from_file(args.config) if args.config else BenchConfig(out="results/semisynth")
            report = run_semisynthetic(truth, _apply_overrides(cfg, args), formats=formats, trace=args.trace)
    except (ParameterError, FormatError, OSError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2
    print((report.out / "summary.md").read_text() if (report.out / "summary.md").exists()
          else f"wrote {report.out}")
    if not report.ok:
        print(f"bench: all trials failed in {len(report.failed_cells)} cell(s)", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
