"""Multimodal model assembly, the training loop and prediction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ValidationError
from .fusion import fuse, fused_tokens
from .nn import Module
from .optim import Adam, PlateauScheduler
from .tensor import Tensor
from .zoo import Encoder, EncoderConfig, FusionNetwork, Head, block_kind


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    scheduler: bool = False
    threshold: float = 0.5

    def __post_init__(self):
        if not self.lr > 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValidationError(f"invalid train config {self}")
        if not 0 < self.threshold < 1:
            raise ValidationError(f"threshold must lie in (0, 1), got {self.threshold}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelDesc:
    """What to build: one encoder per modality, then either a head on the
    single embedding (fusion None), a head on the flat fused vector
    (network None), or a fusion network followed by a head."""

    encoders: dict[str, EncoderConfig]
    fusion: str | None = None
    network: EncoderConfig | None = None


class MultimodalModel(Module):
    def __init__(self, desc: ModelDesc, input_shapes: dict[str, tuple[int, int]],
                 num_classes: int, rng: np.random.Generator):
        super().__init__()
        self.desc = desc
        self.names = list(desc.encoders)
        if desc.fusion is None and len(self.names) != 1:
            raise ValidationError("a model without fusion takes exactly one modality")
        self.pool_raw = {}
        self.encoders = {}
        widths = set()
        for name, cfg in desc.encoders.items():
            n_tokens, d_raw = input_shapes[name]
            # single-token encoders see the token mean of multi-token inputs
            self.pool_raw[name] = block_kind(cfg.kind).single_token and n_tokens > 1
            self.encoders[name] = self.child(f"enc.{name}", Encoder(
                cfg, 1 if self.pool_raw[name] else n_tokens, d_raw, rng))
            widths.add(cfg.d)
        if len(widths) != 1:
            raise ValidationError(f"encoders must share one embedding width, got {sorted(widths)}")
        d = widths.pop()
        self.network = None
        if desc.fusion is None:
            d_head = d
        elif desc.network is None:
            d_head = d * fused_tokens(desc.fusion, len(self.names))
        else:
            if desc.network.d != d:
                raise ValidationError("fusion network width must equal the encoder width")
            self.network = self.child("net", FusionNetwork(
                desc.network, fused_tokens(desc.fusion, len(self.names)), rng))
            d_head = d
        self.head = self.child("head", Head(d_head, num_classes, rng))

    def embed(self, inputs: dict[str, Tensor]) -> list[Tensor]:
        out = []
        for name in self.names:
            x = inputs[name]
            if self.pool_raw[name]:
                x = T.mean(x, axis=-2, keepdims=True)
            out.append(self.encoders[name](x))
        return out

    def forward(self, inputs: dict[str, Tensor]) -> Tensor:
        embeddings = self.embed(inputs)
        if self.desc.fusion is None:
            return self.head(embeddings[0])
        fused = fuse(self.desc.fusion, embeddings, self.names)
        if self.network is None:
            return self.head(fused.flat())
        return self.head(self.network(fused.tokens))


def task_loss(task: str, logits: Tensor, labels: np.ndarray) -> Tensor:
    kind = "cross_entropy" if task == "multiclass" else "binary_cross_entropy"
    return T.loss(kind, logits, labels)


def _batch(inputs: dict[str, np.ndarray], idx: np.ndarray) -> dict[str, Tensor]:
    return {k: Tensor(v[idx]) for k, v in inputs.items()}


@dataclass
class TrainResult:
    steps: int = 0
    epoch_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)


def evaluate_loss(model: MultimodalModel, inputs, labels, task: str, batch_size: int = 256) -> float:
    total = 0.0
    n = len(labels)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(n, start + batch_size))
        total += task_loss(task, model(_batch(inputs, idx)), labels[idx]).item() * len(idx)
    return total / n


def train_model(model: MultimodalModel, inputs: dict[str, np.ndarray], labels: np.ndarray,
                task: str, cfg: TrainConfig, seed: int, val=None) -> TrainResult:
    """Minibatch Adam. With ``cfg.scheduler`` and validation data, the
    learning rate follows a reduce-on-plateau schedule on validation loss.

    Raises NonFiniteError on divergence.
    """
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    sched = PlateauScheduler(cfg.lr) if cfg.scheduler and val is not None else None
    rng = np.random.default_rng(seed)
    result = TrainResult()
    n = len(labels)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = task_loss(task, model(_batch(inputs, idx)), labels[idx])
            T.backward(loss)
            opt.step()
            result.steps += 1
            running += loss.item() * len(idx)
        result.epoch_losses.append(running / max(n, 1))
        if sched is not None:
            val_loss = evaluate_loss(model, val[0], val[1], task)
            result.val_losses.append(val_loss)
            opt.lr = sched.step(val_loss)
        result.lrs.append(opt.lr)
    return result


def predict(model: MultimodalModel, inputs: dict[str, np.ndarray], task: str,
            threshold: float = 0.5, batch_size: int = 256) -> np.ndarray:
    n = len(next(iter(inputs.values())))
    chunks = []
    logit_cut = np.log(threshold / (1 - threshold))
    for start in range(0, n, batch_size):
        logits = model(_batch(inputs, np.arange(start, min(n, start + batch_size)))).data
        chunks.append(np.argmax(logits, axis=1) if task == "multiclass"
                      else (logits > logit_cut).astype(np.int64))
    return np.concatenate(chunks)
