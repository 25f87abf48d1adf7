"""Parameter containers and the two basic layers every block is built from."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


class Module:
    """Holds named parameters and child modules, in insertion order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, value: np.ndarray) -> Tensor:
        p = Tensor(value, requires_grad=True)
        self._params[name] = p
        return p

    def child(self, name: str, module: Module) -> Module:
        self._children[name] = module
        return module

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + k: v for k, v in self._params.items()}
        for name, mod in self._children.items():
            out.update(mod.parameters(f"{prefix}{name}."))
        return out

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    def zero_(self):
        """Set every parameter to zero (used by ablation tests)."""
        for p in self.parameters().values():
            p.data[...] = 0.0

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """y = x W^T + b over the last axis; 1-D inputs are accepted."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.weight = self.param("weight", uniform_init(rng, (d_out, d_in), d_in))
        self.bias = self.param("bias", np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1:] != (self.d_in,):
            raise DimensionError(f"Linear expects last dim {self.d_in}, got shape {x.shape}")
        squeeze = x.ndim == 1
        if squeeze:
            x = T.reshape(x, (1, self.d_in))
        y = T.matmul(x, T.transpose(self.weight))
        if self.bias is not None:
            y = y + T.broadcast_to(self.bias, y.shape)
        return T.reshape(y, (self.d_out,)) if squeeze else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(d))
        self.beta = self.param("beta", np.zeros(d))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)
