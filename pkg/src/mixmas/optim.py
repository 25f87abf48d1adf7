"""Adam optimizer and a reduce-on-plateau learning-rate scheduler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ValidationError
from .tensor import Tensor


class Adam:
    """Adam with bias correction over a named parameter dict.

    ``updates`` counts parameter updates performed (one per step), which the
    search uses to prove that a fully cached run trains nothing.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if not lr > 0:
            raise ValidationError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        for name, p in self.params.items():
            if p.grad is None or not np.all(np.isfinite(p.grad)):
                raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(opt: Adam):
    opt.step()


@dataclass
class PlateauScheduler:
    """Divide the learning rate by ``factor`` after ``patience`` epochs
    without a strict improvement of the validation loss."""

    lr: float
    factor: float = 10.0
    patience: int = 2
    best_loss: float = math.inf
    epochs_since_improvement: int = 0
    history: list[float] = field(default_factory=list)

    def step(self, val_loss: float) -> float:
        if not math.isfinite(val_loss):
            raise ValidationError(f"validation loss must be finite, got {val_loss}")
        self.history.append(val_loss)
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.epochs_since_improvement = 0
            return self.lr
        self.epochs_since_improvement += 1
        if self.epochs_since_improvement >= self.patience:
            self.lr /= self.factor
            self.epochs_since_improvement = 0
        return self.lr


def plateau_step(sched: PlateauScheduler, val_loss: float) -> float:
    return sched.step(val_loss)
