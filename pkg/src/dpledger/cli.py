"""Command-line entry point for scenario runs, sweeps, attacks, and exports.

Exit code is 0 on success; failures print a machine-readable error JSON
to stderr and return nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .errors import ConfigInvalid, DPLedgerError, IoFailure


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": message}),
              file=sys.stderr)
        raise SystemExit(2)


def _load_config(args) -> bench.WorkloadConfig:
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as err:
            raise IoFailure(str(err)) from err
        cfg = bench.WorkloadConfig.from_dict(data)
    elif args.scenario is not None:
        cfg = bench.scenario_config(args.scenario)
    else:
        cfg = bench.scenario_config("error-150")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _add_config_args(sub, positional_config=True):
    if positional_config:
        sub.add_argument("config", nargs="?", default=None,
                         help="path to a scenario config JSON")
    sub.add_argument("--scenario", choices=bench.SCENARIO_NAMES, default=None,
                     help="use a shipped named scenario instead of a file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpledger",
                     description="Permissioned-ledger simulator with a "
                                 "differentially private query interface")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("init-ledger", help="populate a ledger and export it")
    _add_config_args(sub)

    sub = commands.add_parser("run", help="run a scenario and export its report")
    _add_config_args(sub)

    sub = commands.add_parser("sweep", help="accuracy vs. budget threshold sweep")
    _add_config_args(sub)
    sub.add_argument("--epsilon-list", default="1,2,3,4,5",
                     help="comma-separated thresholds")

    sub = commands.add_parser("attack", help="run a privacy attack scenario")
    sub.add_argument("--kind", choices=("linking", "composition", "averaging"),
                     required=True)
    sub.add_argument("--mode", choices=("reuse", "naive"), default="reuse",
                     help="whether the provider reuses budget for repeats")
    sub.add_argument("--epsilon", type=float, default=1.0)
    sub.add_argument("--seed", type=int, default=7)
    sub.add_argument("--config", default=None,
                     help="JSON file with extra knobs for the attack driver "
                          "(categories, repeats, n, n_trials, tolerance, n_writes)")
    sub.add_argument("--out", default="out")

    sub = commands.add_parser("export", help="re-emit CSVs from a saved report")
    sub.add_argument("--report", default="out/report.json")
    sub.add_argument("--out", default="out-export")

    return parser


def _cmd_init_ledger(args) -> int:
    cfg = _load_config(args)
    paths = bench.export_ledger(cfg, args.out)
    print(f"ledger exported: {', '.join(str(p) for p in paths)}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    report = bench.run_scenario(cfg)
    bench.export_report(report, args.out)
    print(f"scenario {cfg.name}: naive eps_sum={report['naive_eps_sum']:.4f} "
          f"reuse eps_sum={report['reuse_eps_sum']:.4f} "
          f"savings={report['savings_pct']:.2f}% "
          f"mean relative error={report['reuse']['mean_relative_error']:.3f}%")
    print(f"report written to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    epsilons = [float(tok) for tok in args.epsilon_list.split(",") if tok.strip()]
    result = bench.sweep(cfg, epsilons)
    bench.export_sweep(result, args.out)
    for row in result["rows"]:
        print(f"epsilon_t={row['epsilon_t']:g}: "
              f"mean relative error={row['mean_relative_error']:.3f}% "
              f"accuracy={row['accuracy']:.2f}%")
    return 0


def _cmd_attack(args) -> int:
    reuse = args.mode == "reuse"
    knobs = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                knobs = json.load(fh)
        except OSError as err:
            raise IoFailure(str(err)) from err
    try:
        if args.kind == "linking":
            result = bench.run_linking_attack(epsilon=args.epsilon, seed=args.seed,
                                              **knobs)
            report = result["report"]
            extra = {"success_rate": result["success_rate"],
                     "expected_rate": result["expected_rate"],
                     "n_trials": result["n_trials"]}
        elif args.kind == "composition":
            report = bench.run_composition_attack(reuse_enabled=reuse,
                                                  epsilon=args.epsilon,
                                                  seed=args.seed, **knobs)
            extra = {}
        else:
            report = bench.run_averaging_attack(reuse_enabled=reuse,
                                                epsilon=args.epsilon,
                                                seed=args.seed, **knobs)
            extra = {}
    except TypeError as err:
        raise ConfigInvalid(f"bad attack config: {err}") from err
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"attack_{args.kind}.json"
    doc = json.loads(report.to_json())
    doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"{args.kind} attack: estimate={report.estimate:.3f} "
          f"true={report.true_value:.3f} error={report.abs_error:.3f} "
          f"success={report.success}")
    print(f"report written to {path}")
    return 0


def _cmd_export(args) -> int:
    try:
        with open(args.report, "r", encoding="utf-8") as fh:
            report = json.load(fh)
    except OSError as err:
        raise IoFailure(str(err)) from err
    paths = bench.export_report(report, args.out)
    print(f"re-exported {len(paths)} files to {args.out}")
    return 0


_COMMANDS = {
    "init-ledger": _cmd_init_ledger,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "attack": _cmd_attack,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DPLedgerError as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
