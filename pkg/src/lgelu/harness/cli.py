"""Command-line entry point: ``lgelu {train,grid,anneal,substitute,report}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ..activation import ActivationKind
from ..metrics import best_validation
from ..schedule import evaluate_substitution
from .config import ConfigError, GridSpec, TrainConfig, load_config
from .data import IdxFormatError, load_dataset
from .reports import ReportError, emit_reports, load_records, write_correlation_csv, \
    write_grid_csv, write_summary_csv
from .runner import (
    SubstitutionRow,
    TrainingDiverged,
    key_for,
    run_grid,
    run_records,
    run_substitution_study,
    run_training,
    summarize_grid,
    summarize_substitution,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("lgelu")


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (key = value format) or a run manifest.json")
    common.add_argument("--seed", type=_seeds, help="comma-separated seeds, overrides the config")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lgelu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one config over its seeds")
    sub.add_parser("grid", parents=[common], help="sweep the (t, c) grid")
    sub.add_parser("anneal", parents=[common], help="learn, then anneal hardness and test ReLU substitution")
    sub.add_parser("substitute", parents=[common], help="GELU vs annealed lambda-GELU substitution table")
    sub.add_parser("report", parents=[common], help="recompute tables from the records in --out")
    return parser


def _load(args):
    if args.config:
        cfg, grid = load_config(args.config)
    else:
        cfg, grid = TrainConfig(), None
    if args.seed:
        cfg = cfg.replace(seeds=args.seed)
        if grid is not None:
            grid = GridSpec(t_values=grid.t_values, c_values=grid.c_values, modes=grid.modes, base=cfg)
    return cfg, grid


def _print_rows(header, rows):
    print("\t".join(header))
    for r in rows:
        print("\t".join("" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v)) for v in r))


def cmd_train(args):
    cfg, _ = _load(args)
    jobs = [(key_for(cfg, s), cfg) for s in cfg.seeds]
    records = run_records(jobs, args.jobs)
    emit_reports(args.out, "train", cfg, records)
    rows = []
    for key, rec in records.items():
        bvs, ep = best_validation(rec) if rec.val_curve else (None, None)
        rows.append((key.seed, bvs, ep, rec.status))
    _print_rows(["seed", "bvs", "epoch", "status"], rows)
    failed = [r for r in records.values() if r.status != "ok"]
    if failed:
        log.error("%d run(s) diverged: %s", len(failed), failed[0].error)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_grid(args):
    cfg, grid = _load(args)
    if grid is None:
        grid = GridSpec(base=cfg)
    result = run_grid(grid, args.jobs)
    emit_reports(args.out, "grid", cfg, result.records, grid=grid, grid_result=result)
    _print_rows(["t", "c", "drift", "delta_bvs", "status"],
                [(r.t, r.c, r.drift, r.delta_bvs, r.status) for r in result.rows])
    return EXIT_OK


def cmd_anneal(args):
    cfg, _ = _load(args)
    cfg = cfg.replace(activation=ActivationKind.LAMBDA_GELU.value, anneal={"enabled": True})
    records, rows = {}, []
    for seed in cfg.seeds:
        result = run_training(cfg, seed)
        records[key_for(cfg, seed)] = result.record
        _, val = load_dataset(cfg.dataset, seed, cfg.val_fraction)
        original, substituted = evaluate_substitution(result.record, result.best_net, val)
        _, ep = best_validation(result.record)
        rows.append(SubstitutionRow(mode="lambda_gelu", seed=seed, best_epoch=ep,
                                    best_phase=result.record.phases[ep - 1],
                                    original=original, substituted=substituted))
    emit_reports(args.out, "anneal", cfg, records, substitution=rows)
    _print_rows(["seed", "best_epoch", "phase", "original", "substituted"],
                [(r.seed, r.best_epoch, r.best_phase, r.original, r.substituted) for r in rows])
    return EXIT_OK


def cmd_substitute(args):
    cfg, _ = _load(args)
    rows, recs = run_substitution_study(cfg, args.jobs)
    records = {}
    for r, rec in zip(rows, recs):
        c = cfg.replace(activation=rec.activation)
        records[key_for(c, r.seed)] = rec
    records = dict(sorted(records.items(), key=lambda kv: (kv[0].activation, kv[0].seed)))
    emit_reports(args.out, "substitute", cfg, records, substitution=rows)
    summary = summarize_substitution(rows)
    _print_rows(["mode", "original", "substituted"], [(m, o, s) for m, (o, s) in summary.items()])
    return EXIT_OK


def cmd_report(args):
    manifest, records = load_records(args.out)
    write_summary_csv(os.path.join(args.out, "summary.csv"), records)
    if manifest.get("grid") is not None:
        cfg, grid = load_config(os.path.join(args.out, "manifest.json"))
        result = summarize_grid(grid, records)
        write_grid_csv(os.path.join(args.out, "grid.csv"), result.rows)
        write_correlation_csv(os.path.join(args.out, "correlations.csv"), result.correlations)
        _print_rows(["t", "c", "drift", "delta_bvs", "status"],
                    [(r.t, r.c, r.drift, r.delta_bvs, r.status) for r in result.rows])
    else:
        rows = []
        for key, rec in records.items():
            bvs, ep = best_validation(rec) if rec.val_curve else (None, None)
            rows.append((key.activation, key.mode, key.seed, bvs, ep, rec.status))
        _print_rows(["activation", "mode", "seed", "bvs", "epoch", "status"], rows)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "grid": cmd_grid, "anneal": cmd_anneal,
            "substitute": cmd_substitute, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ReportError, IdxFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
