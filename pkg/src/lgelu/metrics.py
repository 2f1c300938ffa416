"""Hardness drift, best validation score, and rank correlation of profiles."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .reparam import InitMode


class MetricDirection(str, enum.Enum):
    HIGHER_BETTER = "higher"
    LOWER_BETTER = "lower"


@dataclass
class HardnessProfile:
    lambdas: List[float]
    epoch: int


@dataclass
class RunRecord:
    """Per-epoch log of one training run.

    ``profiles`` is empty for activations without a hardness parameter.
    Epochs are 1-based: ``val_curve[e - 1]`` is the score after epoch e.
    """

    seed: int
    init_mode: Optional[InitMode]
    t: float
    c: float
    profiles: List[HardnessProfile] = field(default_factory=list)
    val_curve: List[float] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    phases: List[str] = field(default_factory=list)
    metric_direction: MetricDirection = MetricDirection.HIGHER_BETTER
    switch_epoch: Optional[int] = None
    activation: str = "lambda_gelu"
    status: str = "ok"
    error: Optional[str] = None

    def __post_init__(self):
        self.metric_direction = MetricDirection(self.metric_direction)
        if self.init_mode is not None:
            self.init_mode = InitMode(self.init_mode)
        if self.profiles and len(self.profiles) != len(self.val_curve):
            raise ValueError("profiles and val_curve must have one entry per epoch")

    @property
    def num_epochs(self) -> int:
        return len(self.val_curve)

    def lambda_matrix(self) -> np.ndarray:
        """Hardness values as an array of shape (epochs, layers)."""
        return np.array([p.lambdas for p in self.profiles], dtype=np.float64)

    def profile_at(self, epoch: int) -> HardnessProfile:
        if not 1 <= epoch <= len(self.profiles):
            raise ValueError(f"no hardness profile for epoch {epoch}")
        return self.profiles[epoch - 1]


def drift_v_lambda(run: RunRecord) -> float:
    """Mean over layers of the summed absolute epoch-to-epoch hardness change."""
    lam = run.lambda_matrix()
    if lam.ndim != 2 or lam.shape[0] < 2:
        raise ValueError("drift needs hardness profiles for at least 2 epochs")
    if lam.shape[1] == 0:
        raise ValueError("drift needs at least one activation layer")
    return float(np.abs(np.diff(lam, axis=0)).sum(axis=0).mean())


def _check_same_cell(runs: Sequence[RunRecord]):
    if not runs:
        raise ValueError("no runs given")
    t, c = runs[0].t, runs[0].c
    for r in runs[1:]:
        if r.t != t or r.c != c:
            raise ValueError(f"runs mix grid cells: ({t}, {c}) vs ({r.t}, {r.c})")


def cell_average_drift(runs: Sequence[RunRecord]) -> float:
    _check_same_cell(runs)
    return float(np.mean([drift_v_lambda(r) for r in runs]))


def best_validation(run: RunRecord) -> Tuple[float, int]:
    """``(best score, 1-based epoch)``; ties go to the earliest epoch."""
    curve = np.asarray(run.val_curve, dtype=np.float64)
    if curve.size == 0:
        raise ValueError("empty validation curve")
    if run.metric_direction is MetricDirection.HIGHER_BETTER:
        idx = int(np.argmax(curve))
    else:
        idx = int(np.argmin(curve))
    return float(curve[idx]), idx + 1


def mean_bvs(runs: Sequence[RunRecord]) -> float:
    if not runs:
        raise ValueError("no runs given")
    return float(np.mean([best_validation(r)[0] for r in runs]))


def delta_bvs(cell_runs: Sequence[RunRecord], baseline_runs: Sequence[RunRecord]) -> float:
    return mean_bvs(cell_runs) - mean_bvs(baseline_runs)


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    sorted_v = v[order]
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    n = len(v)
    while i < n:
        j = i
        while j + 1 < n and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _values(profile):
    if isinstance(profile, HardnessProfile):
        return profile.lambdas
    return profile


def spearman_rho(a, b) -> Optional[float]:
    """Spearman correlation of two hardness profiles.

    Computed as the Pearson correlation of average ranks, which stays exact in
    the presence of ties. Returns None when either profile has all-equal
    values, since the correlation is undefined there.
    """
    x = np.asarray(_values(a), dtype=np.float64)
    y = np.asarray(_values(b), dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"profiles must be 1-D and equally long, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("profiles need at least 2 layers")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        return None
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


def rho_s_across_modes(runs_by_mode: Dict[InitMode, Sequence[RunRecord]],
                       epoch: int) -> Dict[Tuple[InitMode, InitMode], Optional[float]]:
    """Seed-averaged Spearman correlation at ``epoch`` for each pair of modes.

    Seeds whose correlation is undefined are left out of the mean; a pair
    with no defined value maps to None.
    """
    seeds = {}
    for mode, runs in runs_by_mode.items():
        seeds[mode] = {r.seed: r for r in runs}
        if len(seeds[mode]) != len(runs):
            raise ValueError(f"duplicate seeds for mode {mode}")
    seed_sets = {frozenset(v) for v in seeds.values()}
    if len(seed_sets) > 1:
        raise ValueError("initialization modes were run with different seed sets")
    out = {}
    modes = sorted(runs_by_mode, key=lambda m: list(InitMode).index(InitMode(m)))
    for m1, m2 in itertools.combinations(modes, 2):
        vals = []
        for seed in sorted(seeds[m1]):
            rho = spearman_rho(seeds[m1][seed].profile_at(epoch), seeds[m2][seed].profile_at(epoch))
            if rho is not None:
                vals.append(rho)
        out[(m1, m2)] = float(np.mean(vals)) if vals else None
    return out
