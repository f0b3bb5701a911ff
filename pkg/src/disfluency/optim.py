"""Adam with bias correction, updating parameters in place."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .autodiff import Parameter
from .kernels import K


class Adam:
    """Standard Adam. Gradients are read from each parameter's .grad buffer;
    the caller zeroes them between steps."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {id(p): np.zeros_like(p.data) for p in self.params}
        self.v = {id(p): np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            K.adam_update(
                p.data.reshape(-1),
                p.grad.reshape(-1),
                self.m[id(p)].reshape(-1),
                self.v[id(p)].reshape(-1),
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                self.t,
            )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def adam_step(params: Iterable[Parameter], state: Adam) -> None:
    """Functional spelling of state.step(); params must match the state."""
    assert list(params) == state.params
    state.step()
