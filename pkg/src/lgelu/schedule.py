"""Deterministic hardening: learn s, then freeze it and anneal lambda linearly.

Epochs are numbered 1..T. During epochs ``e <= switch_epoch`` the hardness is
learned through s. At the first later epoch the current per-layer values are
captured, every s is frozen, and each layer's hardness is overridden with a
linear ramp that reaches ``lambda_target`` exactly at epoch T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .activation import ActivationKind, substitute_activation
from .gate_math import lambda_target_for
from .network import NetworkState, accuracy

DEFAULT_SWITCH_FRACTION = 0.25
DEFAULT_EPSILON = 5e-3


def switch_epoch_for(total_epochs: int, fraction: float = DEFAULT_SWITCH_FRACTION) -> int:
    return int(math.floor(fraction * total_epochs))


@dataclass
class AnnealPlan:
    total_epochs: int
    switch_epoch: Optional[int] = None
    lambda_target: Optional[float] = None
    captured_lambdas: Optional[List[float]] = None

    def __post_init__(self):
        self.total_epochs = int(self.total_epochs)
        if self.switch_epoch is None:
            self.switch_epoch = switch_epoch_for(self.total_epochs)
        self.switch_epoch = int(self.switch_epoch)
        if self.lambda_target is None:
            self.lambda_target = lambda_target_for(DEFAULT_EPSILON)
        self.lambda_target = float(self.lambda_target)
        if not 1 <= self.switch_epoch < self.total_epochs:
            raise ValueError(f"need 1 <= switch_epoch < total_epochs, got "
                             f"switch_epoch={self.switch_epoch}, total_epochs={self.total_epochs}")
        if not (math.isfinite(self.lambda_target) and self.lambda_target > 1.0):
            raise ValueError(f"lambda_target must be > 1, got {self.lambda_target}")

    @classmethod
    def from_settings(cls, total_epochs, switch_fraction=DEFAULT_SWITCH_FRACTION,
                      epsilon=DEFAULT_EPSILON, lambda_target=None):
        """Build a plan; an explicit ``lambda_target`` wins over ``epsilon``."""
        if lambda_target is None:
            lambda_target = lambda_target_for(epsilon)
        return cls(total_epochs=total_epochs,
                   switch_epoch=switch_epoch_for(total_epochs, switch_fraction),
                   lambda_target=lambda_target)

    @property
    def captured(self) -> bool:
        return self.captured_lambdas is not None

    def is_annealing(self, epoch: int) -> bool:
        return epoch > self.switch_epoch


def lambda_at(plan: AnnealPlan, layer: int, epoch: int) -> float:
    if not plan.captured:
        raise ValueError("hardness values have not been captured yet")
    if not plan.switch_epoch < epoch <= plan.total_epochs:
        raise ValueError(f"epoch {epoch} is outside the annealing window "
                         f"({plan.switch_epoch}, {plan.total_epochs}]")
    start = plan.captured_lambdas[layer]
    w = (epoch - plan.switch_epoch) / (plan.total_epochs - plan.switch_epoch)
    # convex-combination form: returns lambda_target bit-exactly at w == 1
    return (1.0 - w) * start + w * plan.lambda_target


def apply_phase(plan: AnnealPlan, net: NetworkState, epoch: int) -> None:
    """Put ``net`` in the right phase for ``epoch``; call once before each epoch."""
    params = net.hardness
    if not plan.is_annealing(epoch):
        for p in params:
            p.frozen = False
            p.override = None
        return
    if not plan.captured:
        plan.captured_lambdas = [p.effective_lambda() for p in params]
    for i, p in enumerate(params):
        p.frozen = True
        p.override = lambda_at(plan, i, epoch)


def evaluate_substitution(run, net_at_best: Optional[NetworkState], val_set) -> Tuple[float, float]:
    """Score a checkpoint as-is and after swapping every activation for ReLU.

    No parameter is touched between the two evaluations.
    """
    if net_at_best is None:
        raise ValueError(f"run with seed {getattr(run, 'seed', '?')} has no best checkpoint")
    x, y = val_set
    original = accuracy(net_at_best, x, y)
    substituted = accuracy(substitute_activation(net_at_best, ActivationKind.RELU), x, y)
    return original, substituted
