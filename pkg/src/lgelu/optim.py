"""SGD and AdamW over three parameter groups.

* weights: rate ``lr_weights``, weight decay applied
* biases: rate ``lr_weights``, no decay
* hardness variables s: rate ``multiplier_c * lr_weights``, no decay, and
  never updated while frozen
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .network import GradientSet, NetworkState


class OptimizerKind(str, enum.Enum):
    SGD = "sgd"
    ADAMW = "adamw"


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.SGD
    lr_weights: float = 5e-2
    multiplier_c: float = 9.0
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if not self.lr_weights > 0:
            raise ValueError("lr_weights must be > 0")
        # c = 0 is accepted: it disables hardness learning entirely
        if not self.multiplier_c >= 0:
            raise ValueError("multiplier_c must be >= 0")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be > 0")

    @property
    def lr_hardness(self) -> float:
        return self.multiplier_c * self.lr_weights


@dataclass
class OptimizerState:
    step: int = 0
    m_weights: Optional[List[np.ndarray]] = None
    v_weights: Optional[List[np.ndarray]] = None
    m_biases: Optional[List[np.ndarray]] = None
    v_biases: Optional[List[np.ndarray]] = None
    m_s: Optional[np.ndarray] = None
    v_s: Optional[np.ndarray] = None
    # per-s step counts: a frozen s keeps its own bias correction clock
    s_steps: Optional[np.ndarray] = None


def init_state(net: NetworkState) -> OptimizerState:
    n_hidden = len(net.hidden_layers)
    return OptimizerState(
        m_weights=[np.zeros_like(l.weights) for l in net.layers],
        v_weights=[np.zeros_like(l.weights) for l in net.layers],
        m_biases=[np.zeros_like(l.bias) for l in net.layers],
        v_biases=[np.zeros_like(l.bias) for l in net.layers],
        m_s=np.zeros(n_hidden),
        v_s=np.zeros(n_hidden),
        s_steps=np.zeros(n_hidden, dtype=np.int64),
    )


def _check(net: NetworkState, state: OptimizerState, grads: GradientSet):
    if len(grads.weights) != len(net.layers) or len(grads.biases) != len(net.layers):
        raise ValueError("gradient set does not match the number of layers")
    if len(grads.s) != len(net.hidden_layers):
        raise ValueError("gradient set does not match the number of hardness parameters")
    for i, layer in enumerate(net.layers):
        if grads.weights[i].shape != layer.weights.shape or grads.biases[i].shape != layer.bias.shape:
            raise ValueError(f"gradient shape mismatch in layer {i}")
        if state.m_weights is not None and state.m_weights[i].shape != layer.weights.shape:
            raise ValueError(f"optimizer state shape mismatch in layer {i}")
    if not grads.is_finite():
        bad = [i for i in range(len(net.layers))
               if not (np.all(np.isfinite(grads.weights[i])) and np.all(np.isfinite(grads.biases[i])))]
        bad_s = [i for i, g in enumerate(grads.s) if not math.isfinite(g)]
        raise NonFiniteGradientError(
            f"non-finite gradient at step {state.step + 1}: layers {bad}, hardness {bad_s}")


def _adam_update(m, v, g, beta1, beta2, step):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    return mhat, vhat


def step(state: OptimizerState, net: NetworkState, grads: GradientSet,
         cfg: OptimizerConfig) -> OptimizerState:
    """Apply one update to ``net`` in place and advance ``state``."""
    _check(net, state, grads)
    state.step += 1
    lr = cfg.lr_weights
    lr_s = cfg.lr_hardness
    wd = cfg.weight_decay

    if cfg.kind is OptimizerKind.SGD:
        for i, layer in enumerate(net.layers):
            layer.weights -= lr * (grads.weights[i] + wd * layer.weights)
            layer.bias -= lr * grads.biases[i]
        for i, p in enumerate(net.hardness):
            if not p.frozen:
                p.s = p.s - lr_s * grads.s[i]
    else:
        if state.m_weights is None:
            count = state.step
            state = init_state(net)
            state.step = count
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        for i, layer in enumerate(net.layers):
            # decoupled decay, weights only
            layer.weights -= lr * wd * layer.weights
            mhat, vhat = _adam_update(state.m_weights[i], state.v_weights[i],
                                      grads.weights[i], b1, b2, state.step)
            layer.weights -= lr * mhat / (np.sqrt(vhat) + eps)
            mhat, vhat = _adam_update(state.m_biases[i], state.v_biases[i],
                                      grads.biases[i], b1, b2, state.step)
            layer.bias -= lr * mhat / (np.sqrt(vhat) + eps)
        for i, p in enumerate(net.hardness):
            if p.frozen:
                continue
            state.s_steps[i] += 1
            g = grads.s[i]
            state.m_s[i] = b1 * state.m_s[i] + (1.0 - b1) * g
            state.v_s[i] = b2 * state.v_s[i] + (1.0 - b2) * g * g
            k = int(state.s_steps[i])
            mhat = state.m_s[i] / (1.0 - b1 ** k)
            vhat = state.v_s[i] / (1.0 - b2 ** k)
            p.s = float(p.s - lr_s * mhat / (math.sqrt(vhat) + eps))
    net.version += 1
    return state


class Optimizer:
    """Bundles a config with its state for use in a training loop."""

    def __init__(self, net: NetworkState, cfg: OptimizerConfig):
        self.cfg = cfg
        self.state = init_state(net)

    def step(self, net: NetworkState, grads: GradientSet) -> None:
        self.state = step(self.state, net, grads, self.cfg)
