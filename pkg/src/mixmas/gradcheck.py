"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def numerical_gradients(f: Callable[[], Tensor], tensors: Sequence[Tensor],
                        h: float = 1e-6) -> list[np.ndarray]:
    """d f / d t for each tensor by central differences, perturbing in place."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def analytic_gradients(f: Callable[[], Tensor], tensors: Sequence[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    T.backward(f())
    return [t.grad.copy() for t in tensors]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def grad_check(f: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-6) -> float:
    """Worst relative error between reverse-mode and finite-difference
    gradients of the scalar ``f()`` over ``tensors``."""
    analytic = analytic_gradients(f, tensors)
    numeric = numerical_gradients(f, tensors, h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def projected(out_fn: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    """Turn a tensor-valued function into a scalar one by a fixed random
    projection, so every output entry contributes to the gradient."""
    proj = {}

    def f():
        out = out_fn()
        if "w" not in proj:
            proj["w"] = Tensor(rng.standard_normal(out.shape))
        return T.sum_(out * proj["w"])

    return f
