"""Seeded synthetic prediction matrices with known ground truth.

Each sample gets a uniform random true label; model j reproduces it with its
target accuracy and otherwise lands uniformly on one of the other C-1
classes, matching the error model the ranker assumes.  An optional hard
subset multiplies every model's accuracy by (1 - hard_penalty) on those
samples, giving a deliberately misspecified regime for robustness studies.

Reproducibility: generation uses NumPy's PCG64 stream
(``np.random.default_rng(seed)``) with a fixed draw order - true labels,
hard-sample mask, then per model a correctness draw followed by a wrong-label
offset - so a spec maps to a bit-identical matrix on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import GroundTruth, PredictionMatrix

__all__ = ["SynthSpec", "generate", "realized_accuracy"]


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic matrix.

    ``accuracies`` is either one value per model or a (low, high) pair that
    is spaced evenly across models.  A length-2 sequence with two models
    means the same thing under both readings.
    """

    num_models: int
    num_samples: int
    num_classes: int
    accuracies: tuple[float, ...]
    hard_fraction: float = 0.0
    hard_penalty: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "accuracies", tuple(float(a) for a in self.accuracies))
        if self.num_models < 2:
            raise ValueError("need at least 2 models")
        if self.num_samples < 1:
            raise ValueError("need at least 1 sample")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if len(self.accuracies) not in (2, self.num_models):
            raise ValueError(
                f"accuracies must list {self.num_models} values or a (low, high) pair"
            )
        if any(not 0.0 <= a <= 1.0 for a in self.accuracies):
            raise ValueError("accuracies must lie in [0, 1]")
        is_range = len(self.accuracies) == 2 and self.num_models != 2
        if is_range and self.accuracies[0] > self.accuracies[1]:
            raise ValueError("accuracy range endpoints must be ordered low, high")
        if not 0.0 <= self.hard_fraction < 1.0:
            raise ValueError("hard_fraction must lie in [0, 1)")
        if not 0.0 <= self.hard_penalty <= 1.0:
            raise ValueError("hard_penalty must lie in [0, 1]")

    def resolved_accuracies(self) -> np.ndarray:
        """Per-model target accuracies, expanding a (low, high) pair evenly."""
        if len(self.accuracies) == self.num_models:
            return np.array(self.accuracies, dtype=np.float64)
        low, high = self.accuracies
        return np.linspace(low, high, self.num_models)


def generate(spec: SynthSpec) -> tuple[PredictionMatrix, GroundTruth]:
    """Draw a matrix and its ground truth; identical specs give identical bytes."""
    m, n, num_classes = spec.num_samples, spec.num_models, spec.num_classes
    accuracies = spec.resolved_accuracies()
    rng = np.random.default_rng(spec.seed)

    true_labels = rng.integers(0, num_classes, size=m)
    hard = rng.random(m) < spec.hard_fraction
    labels = np.empty((m, n), dtype=np.int64)
    for j in range(n):
        p_correct = np.where(hard, accuracies[j] * (1.0 - spec.hard_penalty), accuracies[j])
        correct = rng.random(m) < p_correct
        offset = rng.integers(0, num_classes - 1, size=m)
        wrong = (true_labels + 1 + offset) % num_classes
        labels[:, j] = np.where(correct, true_labels, wrong)

    width = len(str(m))
    sample_ids = tuple(f"x{i + 1:0{width}d}" for i in range(m))
    model_names = tuple(f"model_{j + 1}" for j in range(n))
    matrix = PredictionMatrix(model_names, sample_ids, labels, num_classes)
    return matrix, GroundTruth(sample_ids, true_labels)


def realized_accuracy(matrix: PredictionMatrix, truth: GroundTruth) -> np.ndarray:
    """Per-model fraction of samples predicted exactly right."""
    aligned = truth.aligned_labels(matrix.sample_ids)
    return (matrix.labels == aligned[:, None]).mean(axis=0)
