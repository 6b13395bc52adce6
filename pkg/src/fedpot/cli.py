"""Command-line entry point: ``fedpot run | compare | verify | presets``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from fedpot.config import ConfigError, ExperimentConfig, list_presets, parse_config
from fedpot.contract import ContractMenu, verify_ldic_luic, verify_monotonicity
from fedpot.dataset import DatasetError
from fedpot.federation import (
    SCHEMES,
    ExperimentResult,
    centralized_accuracy,
    prepare_data,
    run_experiment,
)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2

SUMMARY_FIELDS = [
    "round",
    "scheme",
    "selected",
    "accuracy",
    "tprate",
    "tnr",
    "f1",
    "loss",
    "fairness",
    "budget",
    "budget_spent",
    "deviation",
]


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def write_outputs(result: ExperimentResult, out: Path) -> list[str]:
    """Write rounds.jsonl, summary.csv, summary.json and config.resolved into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    with (out / "rounds.jsonl").open("w", encoding="utf-8") as fh:
        for rep in result.reports:
            fh.write(_dumps(rep.as_dict()) + "\n")
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        for rep in result.reports:
            m = rep.metrics.as_dict()
            writer.writerow(
                [
                    rep.round,
                    rep.scheme,
                    len(rep.selected),
                    m["accuracy"],
                    m["tprate"],
                    m["tnr"],
                    m["f1"],
                    m["loss"],
                    rep.fairness,
                    rep.budget,
                    rep.budget_spent,
                    rep.deviation,
                ]
            )
    (out / "summary.json").write_text(_dumps(result.summary) + "\n", encoding="utf-8")
    (out / "config.resolved").write_text(result.config.dump(), encoding="utf-8")
    return ["rounds.jsonl", "summary.csv", "summary.json", "config.resolved"]


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.output_dir = args.out
    if getattr(args, "scheme", None) is not None:
        cfg.scheme = args.scheme
    return cfg


def _flag_partial(out: Path, err: Exception) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "PARTIAL").write_text(f"run aborted: {err}\n", encoding="utf-8")
    except OSError:
        pass


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    try:
        result = run_experiment(cfg)
        files = write_outputs(result, out)
    except (DatasetError, OSError, ValueError) as err:
        _flag_partial(out, err)
        raise
    final = result.summary["final_metrics"]
    print(f"{cfg.scheme}: {len(result.reports)} rounds, final accuracy {final['accuracy']}")
    print(f"wrote {', '.join(files)} to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    try:
        data = prepare_data(cfg)
        curves: dict[str, list[Optional[float]]] = {}
        summaries = []
        for scheme in SCHEMES:
            sub = cfg.model_copy(deep=True)
            sub.scheme = scheme
            result = run_experiment(sub, data=data)
            write_outputs(result, out / scheme)
            curves[scheme] = [r.metrics.accuracy for r in result.reports]
            summaries.append(result.summary)
        curves["centralized"] = list(centralized_accuracy(cfg, data))
    except (DatasetError, OSError, ValueError) as err:
        _flag_partial(out, err)
        raise
    with (out / "compare.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        names = list(curves)
        writer.writerow(["round", *names])
        for z in range(cfg.rounds):
            writer.writerow([z + 1, *(curves[n][z] for n in names)])
    with (out / "compare_summary.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "accuracy", "tprate", "tnr", "f1", "mean_fairness", "total_spent"])
        for s in summaries:
            m = s["final_metrics"]
            writer.writerow(
                [s["scheme"], m["accuracy"], m["tprate"], m["tnr"], m["f1"], s["mean_fairness"], s["total_spent"]]
            )
            print(f"{s['scheme']:>12}: accuracy {m['accuracy']}, TPRate {m['tprate']}, TNR {m['tnr']}")
    (out / "config.resolved").write_text(cfg.dump(), encoding="utf-8")
    return EXIT_OK


def load_menu(path: str | Path) -> ContractMenu:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    rows = data.get("items") if isinstance(data, dict) else data
    if not isinstance(rows, list) or not rows:
        raise ConfigError(f"{path}: expected a list of menu items (or a mapping with 'items')")
    try:
        return ContractMenu.from_dicts(rows)
    except (KeyError, TypeError) as err:
        raise ConfigError(f"{path}: malformed menu item: {err}") from None


def cmd_verify(args) -> int:
    menu = load_menu(args.menu)
    violations = verify_monotonicity(menu)
    if len(menu) >= 2:
        violations += verify_ldic_luic(menu)
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violation(s)")
        return EXIT_VIOLATIONS
    print(f"menu with {len(menu)} item(s): no violations")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True, help="YAML config file or preset name")
    p_run.add_argument("--out", help="output directory (overrides output_dir)")
    p_run.add_argument("--seed", type=int, help="override the master seed")
    p_run.add_argument("--scheme", choices=SCHEMES, help="override the averaging scheme")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run all three schemes with shared seeds")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--out")
    p_cmp.add_argument("--seed", type=int)
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="check a contract menu for monotonicity and LDIC/LUIC")
    p_ver.add_argument("--menu", required=True)
    p_ver.set_defaults(func=cmd_verify)

    p_pre = sub.add_parser("presets", help="list bundled scenario presets")
    p_pre.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, OSError, ValueError) as err:
        print(f"fedpot: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
