"""Candidate encoder blocks, encoders, heads and the block registry.

All blocks map ``(..., n_tokens, d)`` to the same shape and are pre-norm
residual, so a block whose parameters are all zero is the identity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .errors import DimensionError, ValidationError
from .nn import LayerNorm, Linear, Module, uniform_init
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    depth: int = 1
    d: int = 16
    token_hidden_mult: float = 2.0
    channel_hidden_mult: float = 2.0
    hyper_hidden: int = 8
    monarch_blocks: int | None = None
    positional_info: bool = False
    max_positions: int = 64

    def __post_init__(self):
        if self.depth < 0:
            raise ValidationError(f"depth must be >= 0, got {self.depth}")
        if self.d < 1:
            raise ValidationError(f"width d must be >= 1, got {self.d}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> EncoderConfig:
        return cls(**data)


def _hidden(mult: float, width: int) -> int:
    return max(1, int(round(mult * width)))


class MixerBlock(Module):
    """MLP-Mixer block: token-mixing MLP across positions, then channel-mixing
    MLP per token, each pre-normed with a residual connection.

    The token-mixing weights are bound to ``n_tokens``.
    """

    def __init__(self, n_tokens: int, d: int, token_hidden: int, channel_hidden: int,
                 rng: np.random.Generator):
        super().__init__()
        self.n_tokens = n_tokens
        self.ln1 = self.child("ln1", LayerNorm(d))
        self.w1 = self.param("w1", uniform_init(rng, (token_hidden, n_tokens), n_tokens))
        self.w2 = self.param("w2", uniform_init(rng, (n_tokens, token_hidden), token_hidden))
        self.ln2 = self.child("ln2", LayerNorm(d))
        self.w3 = self.param("w3", uniform_init(rng, (channel_hidden, d), d))
        self.w4 = self.param("w4", uniform_init(rng, (d, channel_hidden), channel_hidden))

    def token_mixing(self, x: Tensor) -> Tensor:
        if x.ndim < 2 or x.shape[-2] != self.n_tokens:
            got = x.shape[-2] if x.ndim >= 2 else None
            raise DimensionError(f"MixerBlock is bound to {self.n_tokens} tokens, got {got}")
        h = T.gelu(T.matmul(self.w1, self.ln1(x)))
        return x + T.matmul(self.w2, h)

    def channel_mixing(self, u: Tensor) -> Tensor:
        h = T.gelu(T.matmul(self.ln2(u), T.transpose(self.w3)))
        return u + T.matmul(h, T.transpose(self.w4))

    def forward(self, x: Tensor) -> Tensor:
        return self.channel_mixing(self.token_mixing(x))


class PlainMLP(Module):
    """Linear layers with GELU between them; the last layer is linear."""

    def __init__(self, widths: list[int], rng: np.random.Generator):
        super().__init__()
        if len(widths) < 2:
            raise ValidationError("PlainMLP needs at least input and output widths")
        self.layers = [self.child(f"fc{i}", Linear(a, b, rng))
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = T.gelu(layer(x))
        return self.layers[-1](x)


class HyperMixerBlock(Module):
    """HyperMixer block. Two tokenwise hypernetworks generate the token-mixing
    weights from the input itself, so no parameter depends on the number of
    tokens. Without positional information the block is permutation
    equivariant over tokens.
    """

    def __init__(self, d: int, hyper_hidden: int, channel_hidden: int,
                 rng: np.random.Generator, positional_info: bool = False, max_positions: int = 64):
        super().__init__()
        self.positional_info = positional_info
        self.hyper1 = self.child("hyper1", PlainMLP([d, hyper_hidden, hyper_hidden], rng))
        self.hyper2 = self.child("hyper2", PlainMLP([d, hyper_hidden, hyper_hidden], rng))
        self.pos = (self.param("pos", 0.02 * rng.standard_normal((max_positions, d)))
                    if positional_info else None)
        self.ln1 = self.child("ln1", LayerNorm(d))
        self.ln2 = self.child("ln2", LayerNorm(d))
        self.w3 = self.param("w3", uniform_init(rng, (channel_hidden, d), d))
        self.w4 = self.param("w4", uniform_init(rng, (d, channel_hidden), channel_hidden))

    def token_mixing(self, x: Tensor) -> Tensor:
        if x.ndim < 2:
            raise DimensionError(f"HyperMixerBlock expects (..., n, d), got {x.shape}")
        hyper_in = x
        if self.pos is not None:
            n = x.shape[-2]
            if n > self.pos.shape[0]:
                raise DimensionError(f"{n} tokens exceed {self.pos.shape[0]} learned positions")
            hyper_in = x + T.broadcast_to(self.pos[:n], x.shape)
        w1 = self.hyper1(hyper_in)
        w2 = self.hyper2(hyper_in)
        h = T.gelu(T.matmul(T.transpose(w2), self.ln1(x)))
        return x + T.matmul(w1, h)

    def channel_mixing(self, u: Tensor) -> Tensor:
        h = T.gelu(T.matmul(self.ln2(u), T.transpose(self.w3)))
        return u + T.matmul(h, T.transpose(self.w4))

    def forward(self, x: Tensor) -> Tensor:
        return self.channel_mixing(self.token_mixing(x))


def default_monarch_blocks(n: int) -> int:
    """floor(sqrt(n)) moved to the nearest divisor of n (smaller on ties)."""
    target = math.isqrt(n)
    divisors = [b for b in range(1, n + 1) if n % b == 0]
    return min(divisors, key=lambda b: (abs(b - target), b))


def stride_permutation(n: int, b: int) -> np.ndarray:
    """Index map of the (b, n/b) transpose: ``(P x)[k] = x[perm[k]]``."""
    return np.arange(n).reshape(b, n // b).T.ravel()


class MonarchLinear(Module):
    """Square map y = L P R x with L, R block-diagonal (b blocks of size n/b)
    and P the (b, n/b) stride permutation. Uses 2 n^2 / b parameters and is
    applied blockwise without forming the dense n x n matrix.
    """

    def __init__(self, n: int, rng: np.random.Generator, blocks: int | None = None):
        super().__init__()
        b = default_monarch_blocks(n) if blocks is None else blocks
        if b < 1 or n % b:
            raise ValidationError(f"Monarch block count {b} does not divide width {n}")
        self.n, self.b, self.m = n, b, n // b
        self.right = self.param("right", uniform_init(rng, (b, self.m, self.m), self.m))
        self.left = self.param("left", uniform_init(rng, (b, self.m, self.m), self.m))

    def _blockwise(self, blocks: Tensor, x: Tensor, lead: tuple[int, ...]) -> Tensor:
        xr = T.reshape(x, lead + (self.b, 1, self.m))
        return T.reshape(T.matmul(xr, T.transpose(blocks)), lead + (self.b, self.m))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim < 1 or x.shape[-1] != self.n:
            raise DimensionError(f"MonarchLinear expects last dim {self.n}, got {x.shape}")
        lead = x.shape[:-1]
        z = self._blockwise(self.right, x, lead)
        axes = list(range(len(lead))) + [len(lead) + 1, len(lead)]
        z = T.reshape(T.transpose(z, axes), lead + (self.n,))
        y = self._blockwise(self.left, z, lead)
        return T.reshape(y, lead + (self.n,))

    def dense(self) -> np.ndarray:
        """Materialise L P R as an n x n matrix (test oracle only)."""
        def blockdiag(blocks):
            out = np.zeros((self.n, self.n))
            for i, blk in enumerate(blocks):
                s = slice(i * self.m, (i + 1) * self.m)
                out[s, s] = blk
            return out

        perm = np.eye(self.n)[stride_permutation(self.n, self.b)]
        return blockdiag(self.left.data) @ perm @ blockdiag(self.right.data)


class MonarchMixerBlock(Module):
    """Mixer block whose token- and channel-mixing maps are Monarch matrices."""

    def __init__(self, n_tokens: int, d: int, rng: np.random.Generator,
                 token_blocks: int | None = None, channel_blocks: int | None = None):
        super().__init__()
        self.n_tokens = n_tokens
        self.ln1 = self.child("ln1", LayerNorm(d))
        self.m1 = self.child("m1", MonarchLinear(n_tokens, rng, token_blocks))
        self.m2 = self.child("m2", MonarchLinear(n_tokens, rng, token_blocks))
        self.ln2 = self.child("ln2", LayerNorm(d))
        self.m3 = self.child("m3", MonarchLinear(d, rng, channel_blocks))
        self.m4 = self.child("m4", MonarchLinear(d, rng, channel_blocks))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim < 2 or x.shape[-2] != self.n_tokens:
            got = x.shape[-2] if x.ndim >= 2 else None
            raise DimensionError(f"MonarchMixerBlock is bound to {self.n_tokens} tokens, got {got}")
        h = T.transpose(self.ln1(x))
        u = x + T.transpose(self.m2(T.gelu(self.m1(h))))
        return u + self.m4(T.gelu(self.m3(self.ln2(u))))


class PlainBlock(Module):
    """Residual feed-forward block applied per token: y = x + MLP(x)."""

    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.mlp = self.child("mlp", PlainMLP([d, hidden, d], rng))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.mlp(x)


# ---------------------------------------------------------------------------
# registry

BlockFactory = Callable[[int, EncoderConfig, np.random.Generator], Module]


@dataclass(frozen=True)
class BlockKind:
    factory: BlockFactory
    single_token: bool = False


def _mixer(n, cfg, rng):
    return MixerBlock(n, cfg.d, _hidden(cfg.token_hidden_mult, n),
                      _hidden(cfg.channel_hidden_mult, cfg.d), rng)


def _hyper(n, cfg, rng):
    return HyperMixerBlock(cfg.d, cfg.hyper_hidden, _hidden(cfg.channel_hidden_mult, cfg.d), rng,
                           cfg.positional_info, cfg.max_positions)


def _monarch(n, cfg, rng):
    return MonarchMixerBlock(n, cfg.d, rng, None, cfg.monarch_blocks)


def _plain(n, cfg, rng):
    return PlainBlock(cfg.d, _hidden(cfg.channel_hidden_mult, cfg.d), rng)


BLOCKS: dict[str, BlockKind] = {
    "mlp_mixer": BlockKind(_mixer),
    "hyper_mixer": BlockKind(_hyper),
    "monarch_mixer": BlockKind(_monarch),
    "plain_mlp": BlockKind(_plain, single_token=True),
}


def register_block(kind: str, factory: BlockFactory, single_token: bool = False):
    """Add an encoder/fusion-network block kind (e.g. a region-aware MLP)."""
    BLOCKS[kind] = BlockKind(factory, single_token)


def block_kind(kind: str) -> BlockKind:
    try:
        return BLOCKS[kind]
    except KeyError:
        raise ValidationError(f"unknown block kind {kind!r}; registered: {sorted(BLOCKS)}") from None


# ---------------------------------------------------------------------------
# encoders and heads


class Encoder(Module):
    """Input projection to width d, ``depth`` blocks, then mean over tokens."""

    def __init__(self, config: EncoderConfig, n_tokens: int, d_raw: int, rng: np.random.Generator):
        super().__init__()
        kind = block_kind(config.kind)
        if kind.single_token and n_tokens != 1:
            raise ValidationError(f"{config.kind} encodes a single token, got {n_tokens} tokens")
        self.config = config
        self.n_tokens = n_tokens
        self.proj = self.child("proj", Linear(d_raw, config.d, rng))
        self.blocks = [self.child(f"block{i}", kind.factory(n_tokens, config, rng))
                       for i in range(config.depth)]

    def forward(self, x: Tensor) -> Tensor:
        h = self.proj(x)
        for blk in self.blocks:
            h = blk(h)
        return T.mean(h, axis=-2)


def encode(encoder: Encoder, x: Tensor) -> Tensor:
    return encoder(x)


class FusionNetwork(Module):
    """Blocks over the fused token matrix followed by token mean-pooling."""

    def __init__(self, config: EncoderConfig, n_tokens: int, rng: np.random.Generator):
        super().__init__()
        kind = block_kind(config.kind)
        if kind.single_token and n_tokens != 1:
            raise ValidationError(f"{config.kind} cannot mix {n_tokens} fused tokens")
        self.config = config
        self.blocks = [self.child(f"block{i}", kind.factory(n_tokens, config, rng))
                       for i in range(config.depth)]

    def forward(self, x: Tensor) -> Tensor:
        for blk in self.blocks:
            x = blk(x)
        return T.mean(x, axis=-2)


class Head(Linear):
    """Affine task head producing logits. Zero-initialised, so an untrained
    model emits constant logits."""

    def __init__(self, d_in: int, num_classes: int, rng: np.random.Generator):
        super().__init__(d_in, num_classes, rng)
        self.weight.data[...] = 0.0


def head_forward(head: Head, e: Tensor) -> Tensor:
    return head(e)


def mixer_block_forward(block: MixerBlock, x: Tensor) -> Tensor:
    return block(x)


def hypermixer_block_forward(block: HyperMixerBlock, x: Tensor) -> Tensor:
    return block(x)


def monarch_linear_forward(layer: MonarchLinear, x: Tensor) -> Tensor:
    return layer(x)


def plain_mlp_forward(mlp: PlainMLP, x: Tensor) -> Tensor:
    return mlp(x)
