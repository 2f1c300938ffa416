"""Scalar special functions for the Gaussian gate, evaluated in float64.

Every function accepts a Python float or a numpy array and returns the same
kind of object back (a float for scalar input).
"""

import math

import numpy as np
from scipy import special

SQRT_2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI


def _as_array(z, name="z"):
    arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def normal_cdf(z):
    """Standard normal CDF.

    Uses ``erfc(-z/sqrt(2))/2``, which equals ``(1 + erf(z/sqrt(2)))/2`` but
    keeps full relative precision in the lower tail.
    """
    arr = _as_array(z)
    return _ret(0.5 * special.erfc(-arr / SQRT_2))


def normal_pdf(z):
    arr = _as_array(z)
    return _ret(INV_SQRT_2PI * np.exp(-0.5 * arr * arr))


def softplus_stable(z):
    """log(1 + e^z) written as max(z, 0) + log1p(e^-|z|) to avoid overflow."""
    arr = _as_array(z)
    return _ret(np.maximum(arr, 0.0) + np.log1p(np.exp(-np.abs(arr))))


def sigmoid(z):
    arr = _as_array(z)
    return _ret(special.expit(arr))


def gate_l1_error(lam):
    """Global L1 distance between the Heaviside gate and Phi(lam * x).

    Integral over the real line of |H(x) - Phi(lam x)|, which evaluates to
    2 / (lam * sqrt(2 pi)).
    """
    lam = float(lam)
    if not math.isfinite(lam) or lam < 1.0:
        raise ValueError(f"lambda must be finite and >= 1, got {lam}")
    return 2.0 / (lam * SQRT_2PI)


def lambda_target_for(epsilon):
    """Smallest hardness whose global gate error does not exceed ``epsilon``."""
    epsilon = float(epsilon)
    if not math.isfinite(epsilon) or epsilon <= 0.0:
        raise ValueError(f"epsilon must be finite and > 0, got {epsilon}")
    return 2.0 / (epsilon * SQRT_2PI)
