"""CSV / JSON artifacts written by the harness and read back by ``report``.

Floats are written with ``repr`` (shortest string that round-trips a float64),
so re-parsing a CSV recovers every value exactly.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Dict, Iterable, List, Optional, Sequence

from .. import __version__
from ..metrics import HardnessProfile, RunRecord, best_validation, drift_v_lambda
from ..optim import OptimizerKind
from .config import GridSpec, TrainConfig, to_dict
from .runner import GridResult, GridRow, RunKey, SubstitutionRow

UNDEFINED = "undefined"
RUNS_DIR = "runs"


class ReportError(OSError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _writer(path):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return fh, csv.writer(fh, lineterminator="\n")


def run_filename(key: RunKey) -> str:
    return f"run_{key.activation}_{key.mode}_t{key.t!r}_c{key.c!r}_seed{key.seed}.csv"


def write_run_csv(path, record: RunRecord) -> None:
    n_layers = len(record.profiles[0].lambdas) if record.profiles else 0
    fh, w = _writer(path)
    with fh:
        w.writerow(["epoch", "val_metric", "loss"] + [f"lambda_{i + 1}" for i in range(n_layers)] + ["phase"])
        for e in range(record.num_epochs):
            lams = record.profiles[e].lambdas if record.profiles else []
            w.writerow([e + 1, _fmt(record.val_curve[e]), _fmt(record.losses[e])]
                       + [_fmt(v) for v in lams] + [record.phases[e]])


def read_run_csv(path, meta: dict) -> RunRecord:
    """Rebuild a :class:`RunRecord` from its CSV and its manifest entry."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc.strerror or exc}") from exc
    header, body = rows[0], rows[1:]
    lam_cols = [i for i, h in enumerate(header) if h.startswith("lambda_")]
    record = RunRecord(seed=meta["seed"], init_mode=meta.get("init_mode"), t=meta["t"], c=meta["c"],
                       metric_direction=meta["metric_direction"], switch_epoch=meta.get("switch_epoch"),
                       activation=meta["activation"], status=meta.get("status", "ok"),
                       error=meta.get("error"))
    for row in body:
        epoch = int(row[0])
        record.val_curve.append(float(row[1]))
        record.losses.append(float(row[2]))
        record.phases.append(row[-1])
        if lam_cols:
            record.profiles.append(HardnessProfile(lambdas=[float(row[i]) for i in lam_cols], epoch=epoch))
    return record


def write_grid_csv(path, rows: Sequence[GridRow]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["t", "c", "drift", "delta_bvs", "n_runs", "status"])
        for r in rows:
            w.writerow([_fmt(r.t), _fmt(r.c), _fmt(r.drift), _fmt(r.delta_bvs), r.n_runs, r.status])


def write_correlation_csv(path, correlations) -> None:
    """One row per (cell, epoch, mode pair) plus a ``mean`` row over the pairs."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["t", "c", "epoch", "mode_pair", "rho"])
        for (t, c), per_epoch in correlations.items():
            for e, pairs in enumerate(per_epoch, 1):
                defined = []
                for (m1, m2), rho in pairs.items():
                    w.writerow([_fmt(t), _fmt(c), e, f"{m1.value}~{m2.value}",
                                UNDEFINED if rho is None else _fmt(rho)])
                    if rho is not None:
                        defined.append(rho)
                mean = sum(defined) / len(defined) if defined else None
                w.writerow([_fmt(t), _fmt(c), e, "mean", UNDEFINED if mean is None else _fmt(mean)])


def write_substitution_csv(path, rows: Sequence[SubstitutionRow]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["mode", "seed", "best_epoch", "best_phase", "original", "substituted", "gap"])
        by_mode: Dict[str, List[SubstitutionRow]] = {}
        for r in rows:
            by_mode.setdefault(r.mode, []).append(r)
            w.writerow([r.mode, r.seed, r.best_epoch, r.best_phase,
                        _fmt(r.original), _fmt(r.substituted), _fmt(r.gap)])
        for mode, rs in by_mode.items():
            o = sum(r.original for r in rs) / len(rs)
            s = sum(r.substituted for r in rs) / len(rs)
            w.writerow([mode, "mean", "", "", _fmt(o), _fmt(s), _fmt(o - s)])


def write_summary_csv(path, records: Dict[RunKey, RunRecord]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["activation", "mode", "t", "c", "seed", "bvs", "best_epoch", "drift", "final_lambda_mean", "status"])
        for key, rec in records.items():
            bvs, epoch = best_validation(rec) if rec.val_curve else (None, None)
            drift = drift_v_lambda(rec) if len(rec.profiles) >= 2 else None
            final = (sum(rec.profiles[-1].lambdas) / len(rec.profiles[-1].lambdas)
                     if rec.profiles and rec.profiles[-1].lambdas else None)
            w.writerow([key.activation, key.mode, _fmt(key.t), _fmt(key.c), key.seed,
                        _fmt(bvs), _fmt(epoch), _fmt(drift), _fmt(final), rec.status])


def write_manifest(path, command: str, cfg: TrainConfig, records: Dict[RunKey, RunRecord],
                   grid: Optional[GridSpec] = None, extra: Optional[dict] = None) -> None:
    grid_dict = None
    if grid is not None:
        grid_dict = to_dict(grid)
        grid_dict.pop("base")
    runs = []
    for key, rec in records.items():
        runs.append({
            "file": f"{RUNS_DIR}/{run_filename(key)}",
            "seed": key.seed, "t": key.t, "c": key.c, "activation": key.activation,
            "init_mode": rec.init_mode.value if rec.init_mode is not None else None,
            "metric_direction": rec.metric_direction.value,
            "switch_epoch": rec.switch_epoch, "status": rec.status, "error": rec.error,
        })
    manifest = {
        "library": "lgelu", "version": __version__, "command": command,
        "config": to_dict(cfg), "grid": grid_dict, "runs": runs,
    }
    if cfg.optimizer.kind is OptimizerKind.SGD:
        manifest["notes"] = ["sgd is plain gradient descent without momentum"]
    if extra:
        manifest.update(extra)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=False)
            fh.write("\n")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_reports(out_dir, command: str, cfg: TrainConfig, records: Dict[RunKey, RunRecord],
                 grid: Optional[GridSpec] = None, grid_result: Optional[GridResult] = None,
                 substitution: Optional[Iterable[SubstitutionRow]] = None) -> List[str]:
    """Write per-run CSVs, summary/grid/correlation tables and the manifest.

    Returns the paths written, in a fixed order.
    """
    written = []
    for key, rec in records.items():
        path = os.path.join(out_dir, RUNS_DIR, run_filename(key))
        write_run_csv(path, rec)
        written.append(path)
    path = os.path.join(out_dir, "summary.csv")
    write_summary_csv(path, records)
    written.append(path)
    if grid is not None:
        path = os.path.join(out_dir, "grid.csv")
        write_grid_csv(path, grid_result.rows if grid_result else [])
        written.append(path)
        path = os.path.join(out_dir, "correlations.csv")
        write_correlation_csv(path, grid_result.correlations if grid_result else {})
        written.append(path)
    if substitution is not None:
        path = os.path.join(out_dir, "substitution.csv")
        write_substitution_csv(path, list(substitution))
        written.append(path)
    path = os.path.join(out_dir, "manifest.json")
    write_manifest(path, command, cfg, records, grid)
    written.append(path)
    return written


def load_records(run_dir):
    """Read ``manifest.json`` and every run CSV it lists.

    Returns ``(manifest, {RunKey: RunRecord})``.
    """
    path = os.path.join(run_dir, "manifest.json")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc.strerror or exc}") from exc
    records = {}
    for meta in manifest["runs"]:
        key = RunKey(t=meta["t"], c=meta["c"], activation=meta["activation"],
                     mode=meta["init_mode"] or "-", seed=meta["seed"])
        records[key] = read_run_csv(os.path.join(run_dir, meta["file"]), meta)
    return manifest, records
