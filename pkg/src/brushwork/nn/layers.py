"""Layer objects: parameters, activations caching, and reverse-mode backward.

Layers cache activations only when ``forward(..., train=True)``; inference
forwards are read-only, so a frozen model can score from many threads while
training forwards/backwards stay single-threaded per model instance.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, StateError
from . import functional as F


class Parameter:
    """A trainable tensor with its gradient and momentum buffer."""

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float32)
        self.grad = np.zeros_like(self.value)
        self.momentum = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape


def he_normal(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """He initialization: N(0, sqrt(2 / fan_in))."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


class Layer:
    """Base layer. Subclasses set ``params`` and implement forward/backward."""

    params: list[Parameter]

    def __init__(self):
        self.params = []
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a training forward")
        cache, self._cache = self._cache, None
        return cache


class Conv2d(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 1, padding: str = "same",
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = kernel * kernel * in_channels
        init = (he_normal(rng, (kernel, kernel, in_channels, out_channels), fan_in)
                if rng is not None
                else np.zeros((kernel, kernel, in_channels, out_channels), dtype=np.float32))
        self.weights = Parameter(init)
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32))
        self.params = [self.weights, self.bias]

    def forward(self, x, train=False):
        if x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"conv2d expected {self.in_channels} input channels, got {x.shape[-1]}")
        cols = F.im2col(x, self.kernel, self.stride, self.padding)
        k, c = self.kernel, self.in_channels
        out = cols @ self.weights.value.reshape(k * k * c, -1).astype(x.dtype) \
            + self.bias.value.astype(x.dtype)
        if train:
            self._cache = (x, cols)
        return out

    def backward(self, dout):
        x, cols = self._take_cache()
        dx, dw, db = F.conv2d_backward(dout, x, cols, self.weights.value.astype(dout.dtype),
                                       self.stride, self.padding)
        self.weights.grad += dw.astype(np.float32)
        self.bias.grad += db.astype(np.float32)
        return dx

    def spec(self):
        return {"kind": "conv2d", "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel": self.kernel,
                "stride": self.stride, "padding": self.padding}


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        init = (he_normal(rng, (n_in, n_out), n_in) if rng is not None
                else np.zeros((n_in, n_out), dtype=np.float32))
        self.weights = Parameter(init)
        self.bias = Parameter(np.zeros(n_out, dtype=np.float32))
        self.params = [self.weights, self.bias]

    def forward(self, x, train=False):
        out = F.dense(x, self.weights.value.astype(x.dtype), self.bias.value.astype(x.dtype))
        if train:
            self._cache = np.atleast_2d(x)
        return out

    def backward(self, dout):
        x = self._take_cache()
        dout2 = np.atleast_2d(dout)
        dx, dw, db = F.dense_backward(dout2, x, self.weights.value.astype(dout2.dtype))
        self.weights.grad += dw.astype(np.float32)
        self.bias.grad += db.astype(np.float32)
        return dx if dout.ndim == 2 else dx[0]

    def spec(self):
        return {"kind": "dense", "n_in": self.n_in, "n_out": self.n_out}


class ReLU(Layer):
    def forward(self, x, train=False):
        if train:
            self._cache = x > 0
        return F.relu(x)

    def backward(self, dout):
        mask = self._take_cache()
        return dout * mask

    def spec(self):
        return {"kind": "relu"}


class MaxPool2d(Layer):
    def __init__(self, size: int = 2, stride: int = 2):
        super().__init__()
        self.size = size
        self.stride = stride

    def forward(self, x, train=False):
        out, argmax = F.maxpool2d_with_argmax(x, self.size, self.stride)
        if train:
            self._cache = (x.shape, argmax)
        return out

    def backward(self, dout):
        x_shape, argmax = self._take_cache()
        return F.maxpool2d_backward(dout, argmax, x_shape, self.size, self.stride)

    def spec(self):
        return {"kind": "maxpool", "size": self.size, "stride": self.stride}


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return F.global_avg_pool(x)

    def backward(self, dout):
        b, h, w, c = self._take_cache()
        return np.broadcast_to(dout[:, None, None, :] / (h * w), (b, h, w, c)).astype(dout.dtype)

    def spec(self):
        return {"kind": "global_avg_pool"}


def layer_from_spec(spec: dict) -> Layer:
    """Rebuild a layer (zero-initialized parameters) from its spec() dict."""
    kind = spec.get("kind")
    if kind == "conv2d":
        return Conv2d(spec["in_channels"], spec["out_channels"], spec["kernel"],
                      spec["stride"], spec["padding"])
    if kind == "dense":
        return Dense(spec["n_in"], spec["n_out"])
    if kind == "relu":
        return ReLU()
    if kind == "maxpool":
        return MaxPool2d(spec["size"], spec["stride"])
    if kind == "global_avg_pool":
        return GlobalAvgPool()
    raise ShapeError(f"unknown layer kind {kind!r} in spec table")


class Sequential:
    """A straight-line stack of layers."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    @property
    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params]

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def spec_table(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    @classmethod
    def from_spec_table(cls, table: list[dict]) -> "Sequential":
        return cls([layer_from_spec(spec) for spec in table])
