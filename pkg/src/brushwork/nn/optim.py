"""Stochastic gradient descent with classical momentum."""

from __future__ import annotations

from ..errors import PreconditionError
from .layers import Parameter


def sgd_step(params: list[Parameter], lr: float, momentum: float = 0.0) -> None:
    """One update: buffer <- momentum*buffer + grad; value <- value - lr*buffer.

    Gradients are zeroed afterwards.
    """
    if lr < 0:
        raise PreconditionError(f"lr must be >= 0, got {lr}")
    if not 0 <= momentum < 1:
        raise PreconditionError(f"momentum must be in [0, 1), got {momentum}")
    for p in params:
        p.momentum *= momentum
        p.momentum += p.grad
        p.value -= lr * p.momentum
        p.grad[:] = 0


class SgdMomentum:
    def __init__(self, params: list[Parameter], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum

    def step(self) -> None:
        sgd_step(self.params, self.lr, self.momentum)
