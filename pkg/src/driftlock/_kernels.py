"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

The synthetic-classifier forward passes run once per oracle query, i.e.
10^5-10^6 times per benchmark, so they are the only code worth jitting.
Both implementations are always importable (`*_numpy` / `*_numba`);
which one backs the public name is chosen at import time by the
DRIFTLOCK_NUMBA environment variable ("0" disables the jit path).
`benchmarks/kernel_bench.py` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("DRIFTLOCK_NUMBA", "1") != "0"

if _WANT_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
        _WANT_NUMBA = False

HAVE_NUMBA = _WANT_NUMBA


# ---------------------------------------------------------------- linear

def linear_logits_numpy(weights: np.ndarray, bias: np.ndarray, x_flat: np.ndarray) -> np.ndarray:
    return weights @ x_flat + bias


def _linear_logits_loop(weights, bias, x_flat):
    k, d = weights.shape
    out = np.empty(k, dtype=np.float64)
    for i in range(k):
        acc = bias[i]
        for j in range(d):
            acc += weights[i, j] * x_flat[j]
        out[i] = acc
    return out


# ---------------------------------------------------------------- one-hidden-layer MLP

def mlp_logits_numpy(w1, b1, w2, b2, x_flat):
    return w2 @ np.tanh(w1 @ x_flat + b1) + b2


def _mlp_logits_loop(w1, b1, w2, b2, x_flat):
    h, d = w1.shape
    k = w2.shape[0]
    hidden = np.empty(h, dtype=np.float64)
    for i in range(h):
        acc = b1[i]
        for j in range(d):
            acc += w1[i, j] * x_flat[j]
        hidden[i] = np.tanh(acc)
    out = np.empty(k, dtype=np.float64)
    for i in range(k):
        acc = b2[i]
        for j in range(h):
            acc += w2[i, j] * hidden[j]
        out[i] = acc
    return out


# ---------------------------------------------------------------- RBF prototypes

def rbf_logits_numpy(prototypes, gamma, temperature, x_flat):
    """Class score = -gamma * (squared distance to the nearest class
    prototype), scaled by temperature. prototypes: (K, P, D)."""
    diff = prototypes - x_flat  # (K, P, D)
    d2 = np.einsum("kpd,kpd->kp", diff, diff)
    return -gamma * temperature * d2.min(axis=1)


def _rbf_logits_loop(prototypes, gamma, temperature, x_flat):
    k, p, d = prototypes.shape
    out = np.empty(k, dtype=np.float64)
    for c in range(k):
        best = np.inf
        for j in range(p):
            acc = 0.0
            for i in range(d):
                t = prototypes[c, j, i] - x_flat[i]
                acc += t * t
            if acc < best:
                best = acc
        out[c] = -gamma * temperature * best
    return out


if HAVE_NUMBA:
    linear_logits_numba = njit(cache=True)(_linear_logits_loop)
    mlp_logits_numba = njit(cache=True)(_mlp_logits_loop)
    rbf_logits_numba = njit(cache=True)(_rbf_logits_loop)
    linear_logits = linear_logits_numba
    mlp_logits = mlp_logits_numba
    rbf_logits = rbf_logits_numba
else:
    linear_logits_numba = None
    mlp_logits_numba = None
    rbf_logits_numba = None
    linear_logits = linear_logits_numpy
    mlp_logits = mlp_logits_numpy
    rbf_logits = rbf_logits_numpy


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
