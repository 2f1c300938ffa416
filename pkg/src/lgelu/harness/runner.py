"""Training runs, (t, c) grid sweeps and the ReLU substitution study."""

from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..activation import ActivationKind
from ..metrics import (
    HardnessProfile,
    MetricDirection,
    RunRecord,
    best_validation,
    cell_average_drift,
    delta_bvs,
    rho_s_across_modes,
)
from ..network import accuracy, backward, build_network, cross_entropy_batch, forward, NetworkState
from ..optim import NonFiniteGradientError, Optimizer
from ..reparam import InitMode
from ..schedule import AnnealPlan, apply_phase, evaluate_substitution
from .config import GridSpec, TrainConfig, from_dict, to_dict
from .data import load_dataset, rng_stream

log = logging.getLogger(__name__)

PHASE_LEARN = "learn"
PHASE_ANNEAL = "anneal"
PHASE_FIXED = "fixed"


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


@dataclass
class TrainResult:
    record: RunRecord
    best_net: Optional[NetworkState]
    final_net: NetworkState
    best_epoch: int
    plan: Optional[AnnealPlan] = None


def _is_better(value, best, direction):
    if best is None:
        return True
    if direction is MetricDirection.HIGHER_BETTER:
        return value > best
    return value < best


def run_training(cfg: TrainConfig, seed: int, data=None) -> TrainResult:
    """Train one network for ``cfg.epochs`` epochs and log every epoch.

    ``data`` may supply a pre-built ``(train, val)`` pair; by default the
    dataset is generated from ``seed``.
    """
    train, val = data if data is not None else load_dataset(cfg.dataset, seed, cfg.val_fraction)
    x_train, y_train = train
    x_val, y_val = val
    sizes = list(cfg.layer_sizes)
    if sizes[0] != x_train.shape[1]:
        raise ValueError(f"layer_sizes starts with {sizes[0]} but the data has "
                         f"{x_train.shape[1]} features")
    n_classes = int(max(y_train.max(), y_val.max())) + 1
    if sizes[-1] < n_classes:
        raise ValueError(f"layer_sizes ends with {sizes[-1]} outputs but the data has "
                         f"{n_classes} classes")

    net = build_network(sizes, rng_stream(seed, "init"), activation=cfg.activation,
                        init_mode=cfg.init_mode, t=cfg.t, uniform_delta=cfg.uniform_delta)
    shuffle_rng = rng_stream(seed, "shuffle")
    opt = Optimizer(net, cfg.optimizer)
    learns_hardness = cfg.activation is ActivationKind.LAMBDA_GELU
    plan = None
    if cfg.anneal.enabled and learns_hardness:
        plan = AnnealPlan.from_settings(cfg.epochs, cfg.anneal.switch_fraction,
                                        cfg.anneal.epsilon, cfg.anneal.lambda_target)

    record = RunRecord(seed=seed, init_mode=cfg.init_mode if learns_hardness else None,
                       t=cfg.t, c=cfg.c, metric_direction=cfg.metric_direction,
                       switch_epoch=plan.switch_epoch if plan else None,
                       activation=cfg.activation.value)
    best_net, best_val, best_epoch = None, None, 0
    n = x_train.shape[0]
    bs = cfg.batch_size

    for epoch in range(1, cfg.epochs + 1):
        if plan is not None:
            apply_phase(plan, net, epoch)
        if not learns_hardness:
            phase = PHASE_FIXED
        elif plan is not None and plan.is_annealing(epoch):
            phase = PHASE_ANNEAL
        else:
            phase = PHASE_LEARN

        perm = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            # overflow is caught by the explicit finiteness checks below
            with np.errstate(over="ignore", invalid="ignore"):
                logits, cache = forward(net, x_train[idx])
                loss, grad = cross_entropy_batch(logits, y_train[idx])
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"seed {seed}: non-finite loss in epoch {epoch}",
                                           _mark_failed(record, f"non-finite loss in epoch {epoch}"))
                try:
                    opt.step(net, backward(net, cache, grad))
                except NonFiniteGradientError as exc:
                    raise TrainingDiverged(f"seed {seed}: {exc}",
                                           _mark_failed(record, str(exc))) from None
            total += loss * len(idx)
        if learns_hardness and not all(math.isfinite(v) for v in net.lambda_profile()):
            raise TrainingDiverged(f"seed {seed}: non-finite hardness in epoch {epoch}",
                                   _mark_failed(record, f"non-finite hardness in epoch {epoch}"))

        val_score = accuracy(net, x_val, y_val)
        record.losses.append(total / n)
        record.val_curve.append(val_score)
        record.phases.append(phase)
        if learns_hardness:
            record.profiles.append(HardnessProfile(lambdas=net.lambda_profile(), epoch=epoch))
        if _is_better(val_score, best_val, cfg.metric_direction):
            best_val, best_epoch = val_score, epoch
            best_net = copy.deepcopy(net)
        log.debug("seed %s epoch %d loss %.5f val %.4f", seed, epoch, total / n, val_score)

    return TrainResult(record=record, best_net=best_net, final_net=net,
                       best_epoch=best_epoch, plan=plan)


def _mark_failed(record: RunRecord, message: str) -> RunRecord:
    record.status = "diverged"
    record.error = message
    return record


# -- parallel job plumbing ---------------------------------------------------

@dataclass(frozen=True)
class RunKey:
    """Sort key that fixes the merge order of parallel results."""

    t: float
    c: float
    activation: str
    mode: str
    seed: int


def _job(args):
    cfg_dict, seed = args
    cfg = from_dict(TrainConfig, cfg_dict)
    try:
        return run_training(cfg, seed).record
    except TrainingDiverged as exc:
        return exc.record


def run_records(jobs: Sequence[Tuple[RunKey, TrainConfig]], n_workers: int = 1) -> Dict[RunKey, RunRecord]:
    """Execute independent runs and return their records keyed and sorted."""
    payload = [(to_dict(cfg), key.seed) for key, cfg in jobs]
    if n_workers > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_job, payload))
    else:
        results = [_job(p) for p in payload]
    merged = dict(zip((key for key, _ in jobs), results))
    return {k: merged[k] for k in sorted(merged, key=_key_order)}


def _key_order(k: RunKey):
    return (k.t, k.c, k.activation, k.mode, k.seed)


def key_for(cfg: TrainConfig, seed: int) -> RunKey:
    mode = cfg.init_mode.value if cfg.activation is ActivationKind.LAMBDA_GELU else "-"
    return RunKey(t=cfg.t, c=cfg.c, activation=cfg.activation.value, mode=mode, seed=seed)


# -- grid sweep ----------------------------------------------------------------

@dataclass
class GridRow:
    t: float
    c: float
    drift: Optional[float]
    delta_bvs: Optional[float]
    n_runs: int
    status: str = "ok"


@dataclass
class GridResult:
    rows: List[GridRow]
    records: Dict[RunKey, RunRecord]
    baseline: List[RunRecord]
    # (t, c) -> epoch -> mode pair -> rho
    correlations: Dict[Tuple[float, float], List[Dict[Tuple[InitMode, InitMode], Optional[float]]]] = \
        field(default_factory=dict)


def grid_jobs(grid: GridSpec) -> List[Tuple[RunKey, TrainConfig]]:
    base = grid.base
    jobs = []
    gelu = base.replace(activation=ActivationKind.GELU.value)
    for seed in base.seeds:
        jobs.append((key_for(gelu, seed), gelu))
    for t in grid.t_values:
        for c in grid.c_values:
            for mode in grid.modes:
                cfg = base.replace(t=t, init_mode=InitMode(mode).value,
                                   activation=ActivationKind.LAMBDA_GELU.value,
                                   optimizer={"multiplier_c": c})
                for seed in base.seeds:
                    jobs.append((key_for(cfg, seed), cfg))
    return jobs


def summarize_grid(grid: GridSpec, records: Dict[RunKey, RunRecord]) -> GridResult:
    """Aggregate stored run records into one row per (t, c) cell."""
    baseline = [r for k, r in records.items() if k.activation == ActivationKind.GELU.value]
    baseline_ok = [r for r in baseline if r.status == "ok"]
    rows = []
    correlations = {}
    for t in grid.t_values:
        for c in grid.c_values:
            cell = [r for k, r in records.items()
                    if k.activation == ActivationKind.LAMBDA_GELU.value and k.t == t and k.c == c]
            failed = [r for r in cell if r.status != "ok"]
            if failed or not cell:
                why = failed[0].error if failed else "no runs"
                rows.append(GridRow(t=t, c=c, drift=None, delta_bvs=None, n_runs=len(cell),
                                    status=f"failed: {why}"))
                continue
            dbvs = delta_bvs(cell, baseline_ok) if baseline_ok else None
            rows.append(GridRow(t=t, c=c, drift=cell_average_drift(cell), delta_bvs=dbvs,
                                n_runs=len(cell),
                                status="ok" if baseline_ok or not baseline else "ok: baseline failed"))
            by_mode: Dict[InitMode, List[RunRecord]] = {}
            for r in cell:
                by_mode.setdefault(r.init_mode, []).append(r)
            if len(by_mode) >= 2:
                n_epochs = min(r.num_epochs for r in cell)
                correlations[(t, c)] = [rho_s_across_modes(by_mode, e) for e in range(1, n_epochs + 1)]
    return GridResult(rows=rows, records=records, baseline=baseline, correlations=correlations)


def run_grid(grid: GridSpec, n_workers: int = 1) -> GridResult:
    """Sweep every (t, c) cell over all seeds and initialization modes.

    A GELU baseline is trained once per seed; failing runs mark their cell as
    failed without stopping the sweep.
    """
    records = run_records(grid_jobs(grid), n_workers)
    return summarize_grid(grid, records)


# -- substitution study --------------------------------------------------------

@dataclass
class SubstitutionRow:
    mode: str
    seed: int
    best_epoch: int
    best_phase: str
    original: float
    substituted: float

    @property
    def gap(self) -> float:
        return self.original - self.substituted


def _substitution_job(args):
    cfg_dict, seed, mode = args
    cfg = from_dict(TrainConfig, cfg_dict)
    result = run_training(cfg, seed)
    _, val = load_dataset(cfg.dataset, seed, cfg.val_fraction)
    original, substituted = evaluate_substitution(result.record, result.best_net, val)
    _, epoch = best_validation(result.record)
    row = SubstitutionRow(mode=mode, seed=seed, best_epoch=epoch,
                          best_phase=result.record.phases[epoch - 1],
                          original=original, substituted=substituted)
    return row, result.record


def substitution_configs(cfg: TrainConfig, relu_control: bool = True) -> List[Tuple[str, TrainConfig]]:
    out = [
        ("gelu", cfg.replace(activation=ActivationKind.GELU.value, anneal={"enabled": False})),
        ("lambda_gelu", cfg.replace(activation=ActivationKind.LAMBDA_GELU.value,
                                    anneal={"enabled": True})),
    ]
    if relu_control:
        out.append(("relu", cfg.replace(activation=ActivationKind.RELU.value,
                                        anneal={"enabled": False})))
    return out


def run_substitution_study(cfg: TrainConfig, n_workers: int = 1, relu_control: bool = True):
    """Original vs ReLU-substituted validation accuracy at the best checkpoint.

    Rows cover the direct GELU swap, annealed lambda-GELU and (optionally) a
    ReLU-trained control, for every seed. Returns ``(rows, records)``.
    """
    payload = [(to_dict(c), seed, mode)
               for mode, c in substitution_configs(cfg, relu_control) for seed in cfg.seeds]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_substitution_job, payload))
    else:
        results = [_substitution_job(p) for p in payload]
    rows = [r for r, _ in results]
    records = [rec for _, rec in results]
    return rows, records


def summarize_substitution(rows: Sequence[SubstitutionRow]):
    """Mean original / substituted metric per mode, in first-seen order."""
    out = {}
    for r in rows:
        out.setdefault(r.mode, []).append(r)
    return {mode: (float(np.mean([r.original for r in rs])), float(np.mean([r.substituted for r in rs])))
            for mode, rs in out.items()}
