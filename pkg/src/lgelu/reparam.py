"""Softplus reparameterization of the per-layer hardness.

The hardness of a layer is ``lambda = 1 + softplus(s / t)`` where ``s`` is an
unconstrained trainable scalar and ``t > 0`` a fixed temperature.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .gate_math import sigmoid, softplus_stable

DEFAULT_TEMPERATURE = 0.1
DEFAULT_UNIFORM_DELTA = 1e-4

# Smallest float64 strictly above 1. softplus(s/t) drops below the float64
# spacing at 1 once s/t < -36.7; the floor keeps lambda > 1 representable.
LAMBDA_FLOOR = math.nextafter(1.0, 2.0)


class InitMode(str, enum.Enum):
    UNIFORM = "uniform"
    INCREASING = "increasing"
    DECREASING = "decreasing"


@dataclass
class HardnessParam:
    """Unconstrained hardness variable of one activation layer.

    ``override`` is set by the annealing schedule: while it is not None the
    layer uses that value as its hardness and ``s`` is ignored.
    """

    s: float
    t: float = DEFAULT_TEMPERATURE
    frozen: bool = False
    override: Optional[float] = None

    def __post_init__(self):
        self.s = float(self.s)
        self.t = float(self.t)
        if not math.isfinite(self.s):
            raise ValueError(f"s must be finite, got {self.s}")
        if not (math.isfinite(self.t) and self.t > 0.0):
            raise ValueError(f"temperature must be > 0, got {self.t}")

    def lambda_(self) -> float:
        return lambda_of(self)

    def effective_lambda(self) -> float:
        """Hardness used by the forward pass."""
        if self.override is not None:
            return float(self.override)
        return lambda_of(self)


def lambda_from_s(s, t):
    """Vectorized ``1 + softplus(s / t)``, floored just above 1."""
    out = np.maximum(1.0 + softplus_stable(np.asarray(s, dtype=np.float64) / t), LAMBDA_FLOOR)
    return float(out) if np.ndim(out) == 0 else out


def lambda_of(p: HardnessParam) -> float:
    return lambda_from_s(p.s, p.t)


def dlambda_ds(p: HardnessParam) -> float:
    return sigmoid(p.s / p.t) / p.t


def s_for_lambda(lam: float, t: float) -> float:
    """Inverse of :func:`lambda_of`: returns ``t * log(exp(lam - 1) - 1)``."""
    lam = float(lam)
    t = float(t)
    if not (math.isfinite(lam) and lam > 1.0):
        raise ValueError(f"lambda must be > 1 (lambda = 1 needs s = -inf), got {lam}")
    if not (math.isfinite(t) and t > 0.0):
        raise ValueError(f"temperature must be > 0, got {t}")
    u = lam - 1.0
    if u > 30.0:
        # log(e^u - 1) = u + log(1 - e^-u), avoids overflow for large u
        return t * (u + math.log1p(-math.exp(-u)))
    return t * math.log(math.expm1(u))


def init_lambdas(mode: InitMode, num_layers: int, delta: float = DEFAULT_UNIFORM_DELTA) -> List[float]:
    """Initial hardness values for each activation layer."""
    mode = InitMode(mode)
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    low = 1.0 + delta
    if mode is InitMode.UNIFORM:
        return [low] * num_layers
    ramp = np.linspace(low, 2.0, num_layers)
    if mode is InitMode.DECREASING:
        ramp = ramp[::-1]
    return [float(v) for v in ramp]


def init_profile(mode: InitMode, num_layers: int, t: float = DEFAULT_TEMPERATURE,
                 delta: float = DEFAULT_UNIFORM_DELTA) -> List[HardnessParam]:
    return [HardnessParam(s=s_for_lambda(lam, t), t=t)
            for lam in init_lambdas(mode, num_layers, delta)]
