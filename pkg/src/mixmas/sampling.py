"""Sample-size determination with finite population correction, seeded random
sampling, and the class-distribution fidelity gate."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import SamplingError, ValidationError

DEFAULT_Z = 1.96
DEFAULT_P_HAT = 0.5
DEFAULT_EPSILON = 0.01
MAX_DISTANCE = 0.05
DISTANCE_METRIC = "linf"


@dataclass
class SamplePlan:
    N: int
    z: float
    p_hat: float
    epsilon: float
    n: float
    N_prime: int
    seed: int
    indices: list[int] = field(default_factory=list)
    distance: float | None = None
    distance_metric: str = DISTANCE_METRIC
    attempts: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SamplePlan:
        return cls(**data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> SamplePlan:
        plan = cls.from_dict(json.loads(Path(path).read_text()))
        if plan.distance is not None and not plan.distance < MAX_DISTANCE:
            raise ValidationError(f"stored plan violates the distance gate ({plan.distance})")
        return plan


def compute_sample_size(N: int, z: float = DEFAULT_Z, p_hat: float = DEFAULT_P_HAT,
                        epsilon: float = DEFAULT_EPSILON) -> tuple[float, int]:
    """Return ``(n, N_prime)``.

    ``n = z^2 p(1-p) / eps^2`` is the infinite-population size and
    ``N_prime = n / (1 + z^2 p(1-p) / (eps^2 N))`` its finite-population
    correction, rounded up and clamped to ``[1, N]``.

    >>> compute_sample_size(10000, 1.96, 0.5, 0.01)
    (9604.0, 4900)
    """
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ValidationError(f"population size N must be an integer >= 1, got {N!r}")
    if not 0 < p_hat < 1:
        raise ValidationError(f"p_hat must lie in (0, 1), got {p_hat}")
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    if not z > 0:
        raise ValidationError(f"z must be > 0, got {z}")
    num = z**2 * p_hat * (1 - p_hat)
    n = num / epsilon**2
    corrected = n / (1 + num / (epsilon**2 * N))
    return n, int(min(max(math.ceil(corrected), 1), N))


def class_distribution(labels: np.ndarray, num_classes: int | None = None) -> np.ndarray:
    """Class proportions for 1-D labels, per-label positive rates for 2-D."""
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64).mean(axis=0)
    counts = np.bincount(labels.astype(np.int64), minlength=num_classes or 0)
    return counts / counts.sum()


def distribution_distance(orig, sample) -> float:
    """L-infinity distance between two class distributions."""
    orig, sample = np.asarray(orig, float), np.asarray(sample, float)
    if orig.shape != sample.shape:
        raise ValidationError(f"class count mismatch: {orig.shape} vs {sample.shape}")
    return float(np.max(np.abs(orig - sample)))


def draw_sample(N: int, N_prime: int, seed: int) -> np.ndarray:
    """Sorted indices of a uniform draw without replacement."""
    if N_prime > N:
        raise ValidationError(f"cannot draw {N_prime} from a population of {N}")
    if N_prime < 1:
        raise ValidationError(f"sample size must be >= 1, got {N_prime}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(N, size=N_prime, replace=False))


def validated_sample(labels: np.ndarray, z: float = DEFAULT_Z, p_hat: float = DEFAULT_P_HAT,
                     epsilon: float = DEFAULT_EPSILON, seed: int = 0, max_attempts: int = 32,
                     num_classes: int | None = None, size: int | None = None) -> SamplePlan:
    """Redraw with ``seed + attempt`` until the class distribution of the sample
    is within :data:`MAX_DISTANCE` of the full dataset.

    ``size`` overrides the computed N' (the formula quantities are still
    recorded).
    """
    labels = np.asarray(labels)
    N = len(labels)
    n, n_prime = compute_sample_size(N, z, p_hat, epsilon)
    if size is not None:
        n_prime = size
    if labels.ndim == 1 and num_classes is None:
        num_classes = int(labels.max()) + 1
    orig = class_distribution(labels, num_classes)
    best = math.inf
    for attempt in range(max_attempts):
        idx = draw_sample(N, n_prime, seed + attempt)
        dist = distribution_distance(orig, class_distribution(labels[idx], num_classes))
        best = min(best, dist)
        if dist < MAX_DISTANCE:
            return SamplePlan(N=N, z=z, p_hat=p_hat, epsilon=epsilon, n=n, N_prime=n_prime,
                              seed=seed + attempt, indices=idx.tolist(), distance=dist,
                              attempts=attempt + 1)
    raise SamplingError(f"no sample of size {n_prime} met the {MAX_DISTANCE} distance gate in "
                        f"{max_attempts} attempts (best {best:.4f})", best)
