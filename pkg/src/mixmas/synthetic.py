"""Bundled planted-signal datasets and the search config used with them."""

from __future__ import annotations

from .data import SplitSpec, SyntheticModality, SyntheticSpec
from .search import SearchConfig


def bundled_spec(seed: int = 0) -> SyntheticSpec:
    """Four-class bimodal task. Each modality carries one of the two class
    bits, so either alone tops out near 50% while the fused pair is linearly
    separable. The image modality is stored as 8x8x1 pixels and patchified
    into four 16-channel tokens on load."""
    return SyntheticSpec(
        seed=seed, num_samples=2000, num_classes=4, noise=0.5, name="synth-bimodal",
        modalities=[
            SyntheticModality("seq", "disjoint_bits", kind="sequence", n_tokens=4, d=8),
            SyntheticModality("img", "disjoint_bits", kind="image", image=[8, 8, 1], patch=4),
        ],
        split=SplitSpec(0.7, 0.15, 0.15, seed))


def token_order_spec(seed: int = 0) -> SyntheticSpec:
    """``seq`` holds the class only in the order of its tokens; ``aux`` holds
    it in the token mean."""
    return SyntheticSpec(
        seed=seed, num_samples=2000, num_classes=4, noise=0.5, name="synth-token-order",
        modalities=[SyntheticModality("seq", "token_order", n_tokens=4, d=8),
                    SyntheticModality("aux", "pooled_mean", n_tokens=4, d=8)],
        split=SplitSpec(0.7, 0.15, 0.15, seed))


def lossy_fusion_spec(seed: int = 0, bits_per_modality: int = 8) -> SyntheticSpec:
    """Multilabel task with ``bits_per_modality`` independent labels planted in
    each of two modalities.

    With embedding width equal to ``bits_per_modality``, mean or max fusion
    squeezes 2w labels into a w-dimensional vector; w linear thresholds per
    modality cannot then be decoded independently, whereas concatenation
    keeps 2w dimensions.
    """
    w = bits_per_modality
    return SyntheticSpec(
        seed=seed, num_samples=4000, num_classes=2 * w, task="multilabel", noise=0.5,
        name="synth-disjoint-bits",
        modalities=[SyntheticModality("a", "disjoint_bits", n_tokens=4, d=w),
                    SyntheticModality("b", "disjoint_bits", n_tokens=4, d=w)],
        split=SplitSpec(0.7, 0.15, 0.15, seed))


def bundled_config(seed: int = 0, **overrides) -> SearchConfig:
    data = {"sampling": {"epsilon": 0.05, "seed": seed},
            "train": {"lr": 1e-3, "epochs": 10, "batch_size": 32, "seed": seed},
            "model": {"d": 16, "depth": 1}}
    data.update(overrides)
    return SearchConfig.from_dict(data)
