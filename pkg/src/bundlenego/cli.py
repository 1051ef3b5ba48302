"""Command-line entry point: ``bundlenego {run,compare,oracle-check,replay}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .bundles import Bundle, ConfigurationError
from .experiment import METHODS, SUMMARY_ROWS, STRATEGIES, ExperimentConfig, compare, run_experiment
from .negotiation import read_trace
from .oracles import run_all

log = logging.getLogger("bundlenego")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--output", help="output directory (overrides the config)")
    p.add_argument("--num-customers", type=int, help="customers per run")
    p.add_argument("--runs", type=int, help="number of distributions (runs)")
    p.add_argument("--workers", type=int, help="parallel runs")
    p.add_argument("--trace", type=int, metavar="K", help="write traces of the first K customers per run")
    p.add_argument("--full-scale", action="store_true",
                   help="start from n=10, 12000 customers, 10 runs before applying the config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bundlenego", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one method/strategy from a config file")
    p.add_argument("--config", required=True, help="YAML file with ExperimentConfig keys")
    _add_common(p)

    p = sub.add_parser("compare", help="run every method and strategy on shared seeds")
    p.add_argument("--config", help="YAML file with ExperimentConfig keys")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--strategies", nargs="+", choices=STRATEGIES, default=list(STRATEGIES))
    _add_common(p)

    p = sub.add_parser("oracle-check", help="run brute-force consistency checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=1000)

    p = sub.add_parser("replay", help="pretty-print stored session traces")
    p.add_argument("trace", help="traces.jsonl written by run/compare with --trace")
    p.add_argument("--run", type=int)
    p.add_argument("--customer", type=int)
    p.add_argument("--system")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        data = yaml.safe_load(path.read_text()) or {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a mapping of config keys")
    # keys given in the file win over the full-scale preset
    base = ExperimentConfig.full_scale().to_dict() if args.full_scale else {}
    cfg = ExperimentConfig.from_dict({**base, **data})
    overrides = {"seed": args.seed, "output_dir": args.output, "num_customers": args.num_customers,
                 "num_distributions": args.runs, "workers": args.workers,
                 "trace_customers": args.trace}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def format_table(metrics) -> str:
    labels = [m.label for m in metrics]
    summaries = [m.summary() for m in metrics]
    width = max(12, *(len(x) for x in labels))
    lines = [f"{'':<16}" + "".join(f"{x:>{width + 2}}" for x in labels)]
    for name, key in SUMMARY_ROWS:
        cells = "".join(f"{s[key][0]:>{width + 2}.4g}" for s in summaries)
        lines.append(f"{name:<16}{cells}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = load_config(args)
    m = run_experiment(cfg)
    print(format_table([m]))
    print(f"wrote {cfg.output_dir}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args)
    results = compare(cfg, args.methods, args.strategies)
    print(format_table(results))
    print(f"wrote {cfg.output_dir}")
    return 0


def cmd_oracle_check(args) -> int:
    results = run_all(args.seed, args.cases)
    for r in results:
        print(f"{r.name:<12} {'PASS' if r.ok else 'FAIL'}  {r.failures}/{r.cases} failures")
    return 0 if all(r.ok for r in results) else 1


def _fmt_bundle(bits: str | None) -> str:
    return str(Bundle.from_string(bits)) if bits else "-"


def cmd_replay(args) -> int:
    path = Path(args.trace)
    if not path.is_file():
        raise ConfigurationError(f"trace file not found: {path}")
    session = None
    for rec in read_trace(path):
        if args.run is not None and rec.get("run") != args.run:
            continue
        if args.customer is not None and rec.get("customer") != args.customer:
            continue
        if args.system is not None and rec.get("system") != args.system:
            continue
        key = (rec.get("system"), rec.get("run"), rec.get("customer"))
        if key != session:
            session = key
            head = " ".join(f"{k}={v}" for k, v in zip(("system", "run", "customer"), key) if v is not None)
            print(f"== {head}")
        price = "" if rec.get("price") is None else f"{rec['price']:.2f}"
        extra = ""
        if "interest" in rec:
            extra = f"  interest={_fmt_bundle(rec['interest'])}"
        if "sign" in rec:
            extra += f" sign={rec['sign']}"
        print(f"{rec['round']:>4} {rec['proposer']:<8} {rec['event']:<10} "
              f"{_fmt_bundle(rec['bundle']):<20} {price:>10}{extra}")
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "oracle-check": cmd_oracle_check,
            "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, OSError) as exc:
        print(f"bundlenego: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
