"""Intermediate fusion of per-modality embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import tensor as T
from .errors import DimensionError, ValidationError
from .tensor import Tensor

FUSION_KINDS = ("concat", "mean", "max")


@dataclass
class FusedRepr:
    """``tokens`` has shape (..., t, d): t = m for concat, 1 for mean/max."""

    tokens: Tensor
    kind: str

    def flat(self) -> Tensor:
        """The (..., t*d) view used by a linear head."""
        shape = self.tokens.shape
        return T.reshape(self.tokens, shape[:-2] + (shape[-2] * shape[-1],))


def fuse(kind: str, embeddings: Sequence[Tensor], names: Sequence[str] | None = None) -> FusedRepr:
    if kind not in FUSION_KINDS:
        raise ValidationError(f"unknown fusion kind {kind!r}")
    if len(embeddings) < 2:
        raise ValidationError("fusion needs at least two modalities")
    names = list(names) if names is not None else [str(i) for i in range(len(embeddings))]
    ref = embeddings[0].shape
    for name, e in zip(names, embeddings):
        if e.shape != ref:
            raise DimensionError(f"modality {name!r} embedding has shape {e.shape}, expected {ref}")
    stacked = T.stack(embeddings, axis=-2)
    if kind == "concat":
        return FusedRepr(stacked, kind)
    reduced = T.mean(stacked, axis=-2, keepdims=True) if kind == "mean" \
        else T.max_(stacked, axis=-2, keepdims=True)
    return FusedRepr(reduced, kind)


def fused_tokens(kind: str, num_modalities: int) -> int:
    return num_modalities if kind == "concat" else 1
