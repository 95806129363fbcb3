"""Command-line front end.

Each subcommand is one pipeline stage, reading and writing plain files, so
a full experiment can be driven as:

    chipfit gen-faultmaps --config cfg.json --out run/
    chipfit pretrain      --config cfg.json --out run/
    chipfit resilience    --config cfg.json --maps run/faultmaps.json \
                          --model run/model.json --out run/
    chipfit plan          --config cfg.json --maps run/faultmaps.json \
                          --table run/table.json --out run/
    chipfit train         --config cfg.json --maps run/faultmaps.json \
                          --model run/model.json --plan run/plan.json --out run/

which reproduces run_planned() byte for byte. Subcommands are idempotent:
identical inputs always rewrite identical outputs. Validation failures
print one JSON error record to stderr and exit nonzero, without leaving
partial outputs behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import pipeline
from .faultmap import load_fault_maps, save_fault_maps
from .resilience import load_table, save_table, write_table_csv
from .tinynet import load_model, save_model

EXIT_ERROR = 2


def _load_config(args) -> pipeline.ExperimentConfig:
    config = pipeline.load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_gen_faultmaps(args):
    config = _load_config(args)
    maps = pipeline.population_fault_maps(config)
    path = os.path.join(_outdir(args), "faultmaps.json")
    save_fault_maps(maps, path)
    print(f"wrote {path} ({len(maps)} chips, {config.rows}x{config.cols} array)")


def cmd_pretrain(args):
    config = _load_config(args)
    data = pipeline.derive_dataset(config)
    model, baseline = pipeline.pretrain_model(config, data)
    path = os.path.join(_outdir(args), "model.json")
    save_model(model, path)
    print(f"wrote {path} (baseline test accuracy {baseline:.4f})")


def cmd_resilience(args):
    config = _load_config(args)
    maps = load_fault_maps(args.maps)
    model = load_model(args.model)
    data = pipeline.derive_dataset(config)
    table = pipeline.build_table(config, maps, model, data)
    out = _outdir(args)
    json_path = os.path.join(out, "table.json")
    csv_path = os.path.join(out, "table.csv")
    save_table(table, json_path)
    write_table_csv(table, csv_path)
    unreachable = sum(not r.reachable for r in table.rows)
    print(
        f"wrote {json_path} and {csv_path} "
        f"({len(table.rows)} rows, {unreachable} unreachable)"
    )


def cmd_plan(args):
    config = _load_config(args)
    maps = load_fault_maps(args.maps)
    table = load_table(args.table)
    plan = pipeline.make_plan(config, table, maps)
    path = os.path.join(_outdir(args), "plan.json")
    pipeline.save_plan(plan, path)
    total = sum(g.budget for g in plan.groups)
    print(
        f"wrote {path} ({len(plan.groups)} groups for "
        f"{sum(len(g.chip_ids) for g in plan.groups)} chips, "
        f"{len(plan.unplanned)} unplanned, total budget {total} epochs)"
    )


def cmd_train(args):
    config = _load_config(args)
    maps = load_fault_maps(args.maps)
    model = load_model(args.model)
    plan = pipeline.load_plan(args.plan)
    data = pipeline.derive_dataset(config)
    report, group_models = pipeline.execute_plan(
        config, model, data, maps, plan,
        strategy="planned", early_stop=True, workers=args.workers,
    )
    out = _outdir(args)
    for g, trained in enumerate(group_models):
        save_model(trained, os.path.join(out, f"model-group-{g:03d}.json"))
    path = os.path.join(out, "report-planned.csv")
    pipeline.write_report_csv(report, path)
    print(
        f"wrote {path} ({len(group_models)} group checkpoints, "
        f"executed {report.total_executed} epochs, "
        f"met {100 * report.met_fraction:.1f}%)"
    )


def cmd_baseline(args):
    config = _load_config(args)
    maps = load_fault_maps(args.maps)
    model = load_model(args.model)
    data = pipeline.derive_dataset(config)
    if args.strategy == "individual":
        plan = pipeline.individual_plan(config, maps, args.epochs)
        tag = f"individual-e{args.epochs}"
    else:
        plan = pipeline.random_pairs_plan(config, maps, args.epochs)
        tag = f"random-pairs-e{args.epochs}"
    report, _ = pipeline.execute_plan(
        config, model, data, maps, plan,
        strategy=tag, early_stop=False, workers=args.workers,
    )
    path = os.path.join(_outdir(args), f"report-{tag}.csv")
    pipeline.write_report_csv(report, path)
    print(
        f"wrote {path} (executed {report.total_executed} epochs, "
        f"met {100 * report.met_fraction:.1f}%)"
    )


def cmd_report(args):
    reports = [pipeline.read_report_csv(p) for p in args.reports]
    path = os.path.join(_outdir(args), "summary.csv")
    pipeline.write_summary_csv(reports, path)
    print(f"wrote {path} ({len(reports)} strategies)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chipfit",
        description="Plan and run fault-aware retraining for populations of faulty chips.",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="override the master seed from the config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, maps=False, model=False, table=False, plan=False, workers=False):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, help="output directory")
        if maps:
            p.add_argument("--maps", required=True, help="fault-map JSON file")
        if model:
            p.add_argument("--model", required=True, help="model checkpoint JSON")
        if table:
            p.add_argument("--table", required=True, help="resilience table JSON")
        if plan:
            p.add_argument("--plan", required=True, help="retraining plan JSON")
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="training jobs to run in parallel (results identical)")

    p = sub.add_parser("gen-faultmaps", help="sample the chip population's fault maps")
    common(p)
    p.set_defaults(fn=cmd_gen_faultmaps)

    p = sub.add_parser("pretrain", help="train the fault-free baseline model")
    common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("resilience", help="measure the retraining-resilience table")
    common(p, maps=True, model=True)
    p.set_defaults(fn=cmd_resilience)

    p = sub.add_parser("plan", help="budget chips and group-and-fuse their maps")
    common(p, maps=True, table=True)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("train", help="run the planned per-group retraining")
    common(p, maps=True, model=True, plan=True, workers=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("baseline", help="run a fixed-budget baseline strategy")
    common(p, maps=True, model=True, workers=True)
    p.add_argument("--strategy", required=True, choices=("individual", "random-pairs"))
    p.add_argument("--epochs", type=int, required=True,
                   help="fixed epoch budget per training run")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("report", help="summarize strategy reports side by side")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("reports", nargs="+", help="report CSV files to summarize")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ValueError, OSError) as e:
        record = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(record), file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
