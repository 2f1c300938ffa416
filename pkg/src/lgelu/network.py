"""Dense feed-forward classifier with one hardness parameter per hidden layer.

Hidden layers compute ``act(W a + b)``; the last layer emits raw logits.
Gradients are computed by hand in reverse mode, in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .activation import (
    ActivationKind,
    lambda_gelu,
    lambda_gelu_dlambda,
    lambda_gelu_dx,
    relu,
    relu_dx,
)
from .reparam import (
    DEFAULT_TEMPERATURE,
    DEFAULT_UNIFORM_DELTA,
    HardnessParam,
    InitMode,
    dlambda_ds,
    init_profile,
)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class LayerState:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    hardness: Optional[HardnessParam] = None  # None on the output layer
    cached_preact: Optional[np.ndarray] = None

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class NetworkState:
    layers: List[LayerState]
    activation: ActivationKind = ActivationKind.LAMBDA_GELU
    # bumped on every parameter update; forward caches record it
    version: int = 0

    def __post_init__(self):
        self.activation = ActivationKind(self.activation)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise ValueError(f"layer {i}: inconsistent weight/bias shapes")
            if i > 0 and layer.in_dim != self.layers[i - 1].out_dim:
                raise ValueError(f"layer {i}: input dim {layer.in_dim} does not match "
                                 f"previous output dim {self.layers[i - 1].out_dim}")
            is_hidden = i < len(self.layers) - 1
            if is_hidden and layer.hardness is None:
                raise ValueError(f"hidden layer {i} has no hardness parameter")
            if not is_hidden and layer.hardness is not None:
                raise ValueError("output layer must not carry a hardness parameter")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_layers(self) -> List[LayerState]:
        return self.layers[:-1]

    @property
    def hardness(self) -> List[HardnessParam]:
        return [layer.hardness for layer in self.hidden_layers]

    def lambda_profile(self) -> List[float]:
        """Effective hardness of every activation layer, in depth order."""
        return [p.effective_lambda() for p in self.hardness]

    def layer_lambda(self, i: int) -> float:
        if self.activation is ActivationKind.GELU:
            return 1.0
        return self.layers[i].hardness.effective_lambda()


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    preacts: List[np.ndarray]
    lambdas: List[float]
    activation: ActivationKind
    version: int
    net_id: int
    squeeze: bool


@dataclass
class GradientSet:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    s: List[float]
    # dL/dlambda per hidden layer, before the chain through s
    lambdas: List[float] = field(default_factory=list)

    def flat(self) -> np.ndarray:
        parts = [g.ravel() for g in self.weights] + [g.ravel() for g in self.biases]
        parts.append(np.asarray(self.s, dtype=np.float64))
        return np.concatenate(parts)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def build_network(layer_sizes: Sequence[int], rng: np.random.Generator,
                  activation=ActivationKind.LAMBDA_GELU,
                  init_mode=InitMode.UNIFORM, t: float = DEFAULT_TEMPERATURE,
                  uniform_delta: float = DEFAULT_UNIFORM_DELTA) -> NetworkState:
    """Create a network with Glorot-uniform weights and zero biases.

    ``layer_sizes`` lists the input width, every hidden width and the number of
    classes, so a network has ``len(layer_sizes) - 2`` activation layers.
    """
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs at least input and output widths")
    if any(int(n) < 1 for n in layer_sizes):
        raise ValueError("layer widths must be positive")
    n_hidden = len(layer_sizes) - 2
    params = init_profile(init_mode, n_hidden, t, uniform_delta) if n_hidden else []
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        layers.append(LayerState(
            weights=glorot_uniform(rng, int(fan_in), int(fan_out)),
            bias=np.zeros(int(fan_out)),
            hardness=params[i] if i < n_hidden else None,
        ))
    return NetworkState(layers=layers, activation=activation)


def _activate(kind, z, lam):
    if kind is ActivationKind.RELU:
        return relu(z)
    return lambda_gelu(z, lam)


def forward(net: NetworkState, x):
    """Run the network on a single input vector or a batch of row vectors.

    Returns ``(logits, cache)``; the cache is consumed by :func:`backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"input has shape {x.shape}, expected (*, {net.input_dim})")
    inputs, preacts, lambdas = [], [], []
    a = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        preacts.append(z)
        layer.cached_preact = z
        if i == last:
            a = z
        else:
            lam = net.layer_lambda(i)
            lambdas.append(lam)
            a = _activate(net.activation, z, lam)
    cache = ForwardCache(inputs=inputs, preacts=preacts, lambdas=lambdas,
                         activation=net.activation, version=net.version,
                         net_id=id(net), squeeze=squeeze)
    return (a[0] if squeeze else a), cache


def backward(net: NetworkState, cache: Optional[ForwardCache], loss_grad) -> GradientSet:
    """Reverse-mode gradients of the loss w.r.t. weights, biases and each s.

    ``loss_grad`` is dL/dlogits with the same shape as the logits returned by
    the matching :func:`forward` call. Gradients are summed over the batch
    rows, so mean reduction must already be folded into ``loss_grad``.
    """
    if cache is None:
        raise ValueError("backward called without a forward cache")
    if (cache.net_id != id(net) or cache.version != net.version
            or cache.activation is not net.activation
            or len(cache.preacts) != len(net.layers)):
        raise ValueError("stale forward cache: network changed since forward()")
    g = np.asarray(loss_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.preacts[-1].shape:
        raise ValueError(f"loss_grad has shape {g.shape}, expected {cache.preacts[-1].shape}")

    n_layers = len(net.layers)
    gw: List[np.ndarray] = [None] * n_layers
    gb: List[np.ndarray] = [None] * n_layers
    gs = [0.0] * (n_layers - 1)
    glam = [0.0] * (n_layers - 1)

    dz = g
    for i in range(n_layers - 1, -1, -1):
        layer = net.layers[i]
        gw[i] = dz.T @ cache.inputs[i]
        gb[i] = dz.sum(axis=0)
        if i == 0:
            break
        da = dz @ layer.weights  # dL/d(output of hidden layer i-1)
        j = i - 1
        z = cache.preacts[j]
        lam = cache.lambdas[j]
        if net.activation is ActivationKind.RELU:
            dz = da * relu_dx(z)
            continue
        dz = da * lambda_gelu_dx(z, lam)
        if net.activation is ActivationKind.LAMBDA_GELU:
            glam[j] = float(np.sum(da * lambda_gelu_dlambda(z, lam)))
            p = net.layers[j].hardness
            if not p.frozen and p.override is None:
                gs[j] = glam[j] * dlambda_ds(p)
    return GradientSet(weights=gw, biases=gb, s=gs, lambdas=glam)


def loss_cross_entropy(logits, label: int):
    """Softmax cross-entropy of one logit vector; returns ``(loss, dloss/dlogits)``."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("expected a single logit vector")
    label = int(label)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    m = logits.max()
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum())
    probs = np.exp(shifted - lse)
    grad = probs.copy()
    grad[label] -= 1.0
    return float(lse - shifted[label]), grad


def cross_entropy_batch(logits, labels):
    """Mean cross-entropy over a batch and its gradient (already divided by N)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError("labels must have one entry per logit row")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels out of range for {k} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - shifted[rows, labels]))
    grad = np.exp(shifted - lse[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def predict(net: NetworkState, x) -> np.ndarray:
    logits, _ = forward(net, np.atleast_2d(x))
    return np.argmax(logits, axis=1)


def accuracy(net: NetworkState, x, y) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("cannot score an empty set")
    return float(np.mean(predict(net, x) == y))


def save_checkpoint(net: NetworkState, path) -> None:
    """Write every parameter to an ``.npz`` archive; float64 values round-trip exactly."""
    arrays = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION, dtype=np.int64),
        "activation": np.array(net.activation.value),
        "num_layers": np.array(len(net.layers), dtype=np.int64),
    }
    for i, layer in enumerate(net.layers):
        arrays[f"w{i}"] = layer.weights
        arrays[f"b{i}"] = layer.bias
        if layer.hardness is not None:
            p = layer.hardness
            override = np.nan if p.override is None else p.override
            arrays[f"h{i}"] = np.array([p.s, p.t, float(p.frozen), override])
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> NetworkState:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        layers = []
        for i in range(int(data["num_layers"])):
            hardness = None
            if f"h{i}" in data:
                s, t, frozen, override = data[f"h{i}"].tolist()
                hardness = HardnessParam(s=s, t=t, frozen=bool(frozen),
                                         override=None if np.isnan(override) else override)
            layers.append(LayerState(weights=data[f"w{i}"].copy(), bias=data[f"b{i}"].copy(),
                                     hardness=hardness))
        return NetworkState(layers=layers, activation=str(data["activation"]))
