"""Command line: anonymize, evaluate, bench, gen."""
from __future__ import annotations

import argparse
import json
import sys

from .bench import StrategyMismatchError, bench, format_table
from .index import STRATEGIES
from .io import IngestError
from .mechanisms import ConfigurationError
from .pipeline import GL_ORDERS, RunConfig, anonymize, evaluate
from .synth import write_corpus

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_MISMATCH = 3

# config-file keys that are paths rather than RunConfig fields
_PATH_KEYS = ("input", "output", "report")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return data


def _cmd_anonymize(args):
    data = _load_config(args.config)
    paths = {k: data.pop(k, None) for k in _PATH_KEYS}
    flags = {"mode": args.mode, "epsilon": args.epsilon, "eps_global": args.eps_global,
             "eps_local": args.eps_local, "m": args.m, "grid": args.grid, "seed": args.seed,
             "gl_order": args.gl_order, "strategy": args.strategy, "backend": args.backend}
    data.update({k: v for k, v in flags.items() if v is not None})
    cfg = RunConfig.from_dict(data)
    for key in _PATH_KEYS:
        if getattr(args, key) is not None:
            paths[key] = getattr(args, key)
    if paths["input"] is None or paths["output"] is None:
        raise ConfigurationError("--input and --output are required")
    report = anonymize(cfg, paths["input"], paths["output"], paths["report"],
                       timings=args.timings)
    if paths["report"] is None:
        json.dump(report, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def _cmd_evaluate(args):
    report = evaluate(args.original, args.anonymized, args.report, m=args.m, bins=args.bins,
                      te_grid=args.te_grid, ffp_k=args.ffp_k, grid=args.grid)
    if args.report is None:
        json.dump(report, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
    if report["excluded"]:
        print(f"warning: {report['excluded']} unpaired object(s) excluded", file=sys.stderr)
    return EXIT_OK


def _csv_list(text, convert=str):
    return [convert(p.strip()) for p in text.split(",") if p.strip()]


def _cmd_bench(args):
    try:
        sizes = _csv_list(args.sizes, int)
    except ValueError:
        raise ConfigurationError(f"--sizes must be integers, got {args.sizes!r}") from None
    strategies = _csv_list(args.strategies)
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown or not strategies or not sizes:
        raise ConfigurationError(f"strategies must be drawn from {STRATEGIES}")
    rows = bench(sizes, strategies, seed=args.seed, avg_len=args.avg_len,
                 epsilon=args.epsilon, m=args.m, repeats=args.repeats, backend=args.backend)
    print(format_table(rows))
    if args.report is not None:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump([r.as_dict() for r in rows], fh, sort_keys=True, indent=2)
            fh.write("\n")
    return EXIT_OK


def _cmd_gen(args):
    if args.objects < 1 or args.avg_len < 1:
        raise ConfigurationError("--objects and --avg-len must be >= 1")
    n = write_corpus(args.output, args.objects, args.avg_len, seed=args.seed, grid=args.grid)
    print(f"wrote {n} samples for {args.objects} objects to {args.output}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="trajdp", description="Differentially private "
                                "trajectory publishing by signature-point editing.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("anonymize", help="anonymise a trajectory CSV")
    a.add_argument("--config", help="JSON file of run settings; flags take precedence")
    a.add_argument("--input")
    a.add_argument("--output")
    a.add_argument("--report", help="write the JSON report here instead of stdout")
    a.add_argument("--mode", choices=("pureG", "pureL", "GL"))
    a.add_argument("--epsilon", type=float, help="total budget, split evenly in GL mode")
    a.add_argument("--eps-global", type=float)
    a.add_argument("--eps-local", type=float)
    a.add_argument("--m", type=int)
    a.add_argument("--grid", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--gl-order", choices=GL_ORDERS)
    a.add_argument("--strategy", choices=STRATEGIES)
    a.add_argument("--backend", choices=("compiled", "python"))
    a.add_argument("--timings", action="store_true", help="add wall time per phase to the "
                   "report (the output is then no longer byte-reproducible)")
    a.set_defaults(func=_cmd_anonymize)

    e = sub.add_parser("evaluate", help="metrics of an anonymised file against its original")
    e.add_argument("--original", required=True)
    e.add_argument("--anonymized", required=True)
    e.add_argument("--report")
    e.add_argument("--m", type=int, default=10)
    e.add_argument("--bins", type=int, default=20)
    e.add_argument("--te-grid", type=int, default=8)
    e.add_argument("--ffp-k", type=int, default=50)
    e.add_argument("--grid", type=int, default=512)
    e.set_defaults(func=_cmd_evaluate)

    b = sub.add_parser("bench", help="time the modification workload per search strategy")
    b.add_argument("--sizes", default="1000")
    b.add_argument("--strategies", default=",".join(STRATEGIES))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--avg-len", type=int, default=1800)
    b.add_argument("--epsilon", type=float, default=1.0)
    b.add_argument("--m", type=int, default=10)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--backend", choices=("compiled", "python"))
    b.add_argument("--report", help="also write the table as JSON")
    b.set_defaults(func=_cmd_bench)

    g = sub.add_parser("gen", help="write a synthetic corpus")
    g.add_argument("--objects", type=int, required=True)
    g.add_argument("--avg-len", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grid", type=int, default=512)
    g.add_argument("--output", required=True)
    g.set_defaults(func=_cmd_gen)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StrategyMismatchError as exc:
        print(f"strategy mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
