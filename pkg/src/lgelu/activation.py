"""The lambda-GELU activation x * Phi(lam * x), its partials, and baselines."""

import copy
import enum
import math

import numpy as np

from .gate_math import normal_cdf, normal_pdf


class ActivationKind(str, enum.Enum):
    LAMBDA_GELU = "lambda_gelu"
    GELU = "gelu"
    RELU = "relu"


def _check_lambda(lam):
    lam = float(lam)
    if not math.isfinite(lam) or lam < 1.0:
        raise ValueError(f"lambda must be finite and >= 1, got {lam}")
    return lam


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def lambda_gelu(x, lam):
    lam = _check_lambda(lam)
    x = np.asarray(x, dtype=np.float64)
    return _ret(x * normal_cdf(lam * x))


def gelu(x):
    return lambda_gelu(x, 1.0)


def lambda_gelu_dx(x, lam):
    """d/dx of x Phi(lam x) = Phi(lam x) + lam x phi(lam x)."""
    lam = _check_lambda(lam)
    x = np.asarray(x, dtype=np.float64)
    z = lam * x
    return _ret(normal_cdf(z) + z * normal_pdf(z))


def lambda_gelu_dlambda(x, lam):
    """d/dlam of x Phi(lam x) = x^2 phi(lam x), non-negative everywhere."""
    lam = _check_lambda(lam)
    x = np.asarray(x, dtype=np.float64)
    return _ret(x * x * normal_pdf(lam * x))


def relu(x):
    x = np.asarray(x, dtype=np.float64)
    return _ret(np.maximum(x, 0.0))


def relu_dx(x):
    # subgradient 0 at the origin
    x = np.asarray(x, dtype=np.float64)
    return _ret((x > 0.0).astype(np.float64))


def substitute_activation(network, target):
    """Return a copy of ``network`` whose activation sites all apply ``target``.

    Weights, biases and hardness parameters are copied unchanged; the input
    network is not modified.
    """
    out = copy.deepcopy(network)
    out.activation = ActivationKind(target)
    return out
