"""Central finite-difference verification of analytic gradients.

The numeric side only ever runs inference forwards, so it stays independent
of the backward code it checks. Checks run in float64: parameter values are
upcast in place and all ops preserve input dtype, so the same code path that
trains in float32 is differentiated at full precision here.
"""

from __future__ import annotations

import numpy as np

from .layers import Sequential


def numeric_gradient(loss_fn, value: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. each element of ``value``.

    ``value`` is perturbed in place and restored; ``loss_fn`` must read it.
    """
    grad = np.zeros(value.shape, dtype=np.float64)
    flat = value.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = loss_fn()
        flat[i] = orig - h
        minus = loss_fn()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float((np.abs(analytic - numeric) / denom).max())


def check_model_gradients(model: Sequential, x: np.ndarray,
                          rng: np.random.Generator, h: float = 1e-3) -> float:
    """Worst relative error of analytic vs numeric gradients for one model.

    The scalar objective is sum(forward(x) * w) for a fixed random projection
    w, which exercises every output element. Both input and parameter
    gradients are checked. Mutates the model (upcasts parameters to float64).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    for p in model.params:
        p.value = p.value.astype(np.float64)
        p.grad = np.zeros_like(p.value)

    w = rng.standard_normal(model.forward(x).shape)

    def loss() -> float:
        return float((model.forward(x) * w).sum())

    out = model.forward(x, train=True)
    dx = model.backward(np.broadcast_to(w, out.shape).astype(np.float64))

    worst = max_relative_error(dx, numeric_gradient(loss, x, h=h))
    for p in model.params:
        analytic = p.grad.astype(np.float64).copy()
        worst = max(worst, max_relative_error(analytic, numeric_gradient(loss, p.value, h=h)))
    return worst
