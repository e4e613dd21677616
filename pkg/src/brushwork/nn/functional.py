"""Dense/convolutional primitives with explicit backward passes.

All ops accept either a single example or a batch (leading batch dimension)
and preserve the input dtype, so the same code path runs float32 in training
and float64 under finite-difference verification.
"""

from __future__ import annotations

import numpy as np

from ..errors import PreconditionError, ShapeError


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim:
        return x, False
    if x.ndim == ndim - 1:
        return x[None], True
    raise ShapeError(f"expected {ndim - 1}- or {ndim}-dimensional input, got shape {x.shape}")


def conv_geometry(h: int, w: int, k: int, stride: int, padding: str):
    """Output extents and pad amounts for a conv/pool window."""
    if padding == "same":
        oh = -(-h // stride)
        ow = -(-w // stride)
        pad_h = max((oh - 1) * stride + k - h, 0)
        pad_w = max((ow - 1) * stride + k - w, 0)
        return oh, ow, pad_h // 2, pad_w // 2, pad_h - pad_h // 2, pad_w - pad_w // 2
    if padding == "valid":
        if h < k or w < k:
            raise ShapeError(f"valid padding needs input >= kernel, got {h}x{w} vs k={k}")
        return (h - k) // stride + 1, (w - k) // stride + 1, 0, 0, 0, 0
    raise PreconditionError(f"padding must be 'same' or 'valid', got {padding!r}")


def im2col(x: np.ndarray, k: int, stride: int, padding: str) -> np.ndarray:
    """Extract k x k patches: (B,H,W,C) -> (B,OH,OW,k*k*C)."""
    b, h, w, c = x.shape
    oh, ow, pt, pl, pb, pr = conv_geometry(h, w, k, stride, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = np.empty((b, oh, ow, k * k * c), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            patch = xp[:, i : i + (oh - 1) * stride + 1 : stride,
                       j : j + (ow - 1) * stride + 1 : stride, :]
            cols[..., (i * k + j) * c : (i * k + j + 1) * c] = patch
    return cols

def col2im(dcols: np.ndarray, x_shape: tuple, k: int, stride: int, padding: str) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch gradients back to input shape."""
    b, h, w, c = x_shape
    oh, ow, pt, pl, pb, pr = conv_geometry(h, w, k, stride, padding)
    dxp = np.zeros((b, h + pt + pb, w + pl + pr, c), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + (oh - 1) * stride + 1 : stride,
                j : j + (ow - 1) * stride + 1 : stride, :] += \
                dcols[..., (i * k + j) * c : (i * k + j + 1) * c]
    return dxp[:, pt : pt + h, pl : pl + w, :]


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: str = "same") -> np.ndarray:
    """Cross-correlation of (B,H,W,C) or (H,W,C) input with (k,k,C,K) weights."""
    x, squeeze = _batched(x, 4)
    k, k2, c, n_out = weights.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd extent, got {k}x{k2}")
    if x.shape[3] != c:
        raise ShapeError(f"input has {x.shape[3]} channels, weights expect {c}")
    if bias.shape != (n_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({n_out},)")
    if stride < 1:
        raise PreconditionError(f"stride must be >= 1, got {stride}")
    cols = im2col(x, k, stride, padding)
    out = cols @ weights.reshape(k * k * c, n_out) + bias
    return out[0] if squeeze else out


def conv2d_backward(dout: np.ndarray, x: np.ndarray, cols: np.ndarray,
                    weights: np.ndarray, stride: int, padding: str):
    """Gradients of conv2d: returns (dx, dweights, dbias)."""
    k, _, c, n_out = weights.shape
    w2d = weights.reshape(k * k * c, n_out)
    dflat = dout.reshape(-1, n_out)
    dw = (cols.reshape(-1, k * k * c).T @ dflat).reshape(weights.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w2d.T).reshape(cols.shape)
    dx = col2im(dcols, x.shape, k, stride, padding)
    return dx, dw, db


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map: (B,n) or (n,) input with (n,m) weights."""
    x, squeeze = _batched(x, 2)
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"input width {x.shape[1]} != weight rows {weights.shape[0]}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[1]},)")
    out = x @ weights + bias
    return out[0] if squeeze else out


def dense_backward(dout: np.ndarray, x: np.ndarray, weights: np.ndarray):
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool2d(x: np.ndarray, size: int = 2, stride: int = 2) -> np.ndarray:
    out, _ = maxpool2d_with_argmax(x, size, stride)
    return out


def maxpool2d_with_argmax(x: np.ndarray, size: int = 2, stride: int = 2):
    """Ceil-mode max pooling; tail windows are padded with -inf.

    Returns (out[B,OH,OW,C], argmax[B,OH,OW,C]) with argmax indexing the
    in-window position (row-major) that produced each maximum.
    """
    x, squeeze = _batched(x, 4)
    b, h, w, c = x.shape
    oh = max(1, -(-(h - size) // stride) + 1)
    ow = max(1, -(-(w - size) // stride) + 1)
    ph = (oh - 1) * stride + size - h
    pw = (ow - 1) * stride + size - w
    xp = np.pad(x, ((0, 0), (0, max(ph, 0)), (0, max(pw, 0)), (0, 0)),
                constant_values=-np.inf)
    windows = np.empty((b, oh, ow, size * size, c), dtype=x.dtype)
    for i in range(size):
        for j in range(size):
            windows[:, :, :, i * size + j, :] = \
                xp[:, i : i + (oh - 1) * stride + 1 : stride,
                   j : j + (ow - 1) * stride + 1 : stride, :]
    argmax = windows.argmax(axis=3)
    out = np.take_along_axis(windows, argmax[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    if squeeze:
        return out[0], argmax[0]
    return out, argmax


def maxpool2d_backward(dout: np.ndarray, argmax: np.ndarray, x_shape: tuple,
                       size: int = 2, stride: int = 2) -> np.ndarray:
    b, h, w, c = x_shape
    oh, ow = dout.shape[1], dout.shape[2]
    ph = max((oh - 1) * stride + size - h, 0)
    pw = max((ow - 1) * stride + size - w, 0)
    dxp = np.zeros((b, h + ph, w + pw, c), dtype=dout.dtype)
    for i in range(size):
        for j in range(size):
            mask = argmax == (i * size + j)
            dxp[:, i : i + (oh - 1) * stride + 1 : stride,
                j : j + (ow - 1) * stride + 1 : stride, :] += dout * mask
    return dxp[:, :h, :w, :]


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(B,H,W,C) -> (B,C) spatial mean."""
    x, squeeze = _batched(x, 4)
    out = x.mean(axis=(1, 2))
    return out[0] if squeeze else out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean cross-entropy of integer labels against softmax(logits).

    ``logits`` may be (c,) with a scalar label or (B,c) with (B,) labels.
    """
    loss, _ = softmax_cross_entropy_grad(logits, labels)
    return loss


def softmax_cross_entropy_grad(logits: np.ndarray, labels):
    """Returns (mean loss, dloss/dlogits)."""
    logits, squeeze = _batched(logits, 2)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    b, c = logits.shape
    if c < 2:
        raise PreconditionError(f"need at least 2 classes, got {c}")
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.min() < 0 or labels.max() >= c:
        raise PreconditionError(f"label out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[np.arange(b), labels]
    grad = softmax(logits)
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    if squeeze:
        grad = grad[0]
    return float(losses.mean()), grad
