"""Finite-difference verification of analytic gradients.

The checker perturbs a random subsample of coordinates of each parameter,
recomputes the scalar loss both ways, and compares the central difference
against the gradient that backward() produced. The loss closure must be
deterministic (fix any noise outside the closure).

Run checks on float64 parameters. Central differences computed in float32
carry ~|f| * 1e-7 / (2h) of noise on the derivative, which no step size can
push below a 1e-3 relative tolerance; float64 at the default h=1e-4 keeps
both rounding and truncation error around 1e-4 even for near-zero gradient
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Parameter, Tensor, backward, zero_grads


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: int
    n_checked: int

    def __str__(self) -> str:
        return (
            f"max rel error {self.max_rel_error:.3e} at "
            f"{self.worst_param}[{self.worst_index}] ({self.n_checked} coords)"
        )


def grad_check_report(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-4,
    max_coords: int = 64,
    seed: int = 0,
) -> GradCheckResult:
    """Compare backward() gradients of ``f`` with central differences.

    At most ``max_coords`` coordinates per parameter are sampled. The
    relative error of a coordinate is |a-n| / max(|a|, |n|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    zero_grads(params)
    backward(f())
    analytic = {id(p): p.grad.copy() for p in params}
    zero_grads(params)

    rng = np.random.default_rng(seed)
    worst = GradCheckResult(0.0, "", -1, 0)
    for p in params:
        flat = p.data.reshape(-1)
        a_flat = analytic[id(p)].reshape(-1)
        size = flat.shape[0]
        coords = rng.permutation(size)[: min(max_coords, size)]
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = f().item()
            flat[idx] = orig - h
            f_minus = f().item()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(a_flat[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst.n_checked += 1
            if rel > worst.max_rel_error:
                worst.max_rel_error = rel
                worst.worst_param = getattr(p, "name", "<param>")
                worst.worst_index = int(idx)
    return worst


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-4,
    max_coords: int = 64,
    seed: int = 0,
) -> float:
    """Maximum relative error between analytic and numeric gradients."""
    return grad_check_report(f, params, h, max_coords, seed).max_rel_error
