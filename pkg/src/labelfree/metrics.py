"""Rank-agreement measures between an estimated and a reference model ranking.

Spearman's rho is the product-moment correlation of the two fractional-rank
vectors (valid under ties), Kendall's tau is the tie-corrected tau-b, and the
top-k overlap is Jaccard similarity of the two top-k model sets.  Significance
comes from a two-sided permutation test on rho.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Ranking, rank_from_scores
from .matrix import GroundTruth, PredictionMatrix

__all__ = [
    "UndefinedCorrelationError",
    "RankPair",
    "ground_truth_ranking",
    "spearman",
    "kendall",
    "jaccard_topk",
    "spearman_pvalue",
]

_EXACT_ENUMERATION_MAX = 7


class UndefinedCorrelationError(ValueError):
    """A rank vector is constant, so the correlation has no defined value."""


@dataclass(frozen=True)
class RankPair:
    """A reference ranking and an estimate of it over the same model set."""

    truth: Ranking
    estimate: Ranking

    def __post_init__(self):
        a = set(self.truth.models())
        b = set(self.estimate.models())
        if a != b:
            extra = sorted(a.symmetric_difference(b))
            raise ValueError("rankings cover different models: " + ", ".join(extra))

    def rank_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """(truth ranks, estimate ranks) over models in sorted-name order."""
        names = sorted(self.truth.models())
        tr = self.truth.rank_of()
        er = self.estimate.rank_of()
        return (
            np.array([tr[m] for m in names], dtype=np.float64),
            np.array([er[m] for m in names], dtype=np.float64),
        )


def ground_truth_ranking(matrix: PredictionMatrix, truth: GroundTruth) -> Ranking:
    """Rank models by exact accuracy against the true labels."""
    aligned = truth.aligned_labels(matrix.sample_ids)
    accuracy = (matrix.labels == aligned[:, None]).mean(axis=0)
    return rank_from_scores(matrix.model_names, accuracy)


def _rho(r: np.ndarray, e: np.ndarray) -> float:
    rc = r - r.mean()
    ec = e - e.mean()
    denom = math.sqrt(float(rc @ rc) * float(ec @ ec))
    if denom == 0.0:
        raise UndefinedCorrelationError("a rank vector is constant")
    return float(rc @ ec) / denom


def spearman(pair: RankPair) -> float:
    """Spearman's rank-order correlation of the two rankings."""
    r, e = pair.rank_vectors()
    if len(r) < 2:
        raise UndefinedCorrelationError("need at least 2 models")
    return _rho(r, e)


def kendall(pair: RankPair) -> float:
    """Kendall's tau-b: (P - Q) / sqrt((P + Q + T)(P + Q + U)).

    P and Q count concordant and discordant pairs; T counts pairs tied only
    in the truth ranking and U pairs tied only in the estimate.  Pairs tied
    on both sides count in neither.
    """
    r, e = pair.rank_vectors()
    if len(r) < 2:
        raise UndefinedCorrelationError("need at least 2 models")
    i, j = np.triu_indices(len(r), k=1)
    dr = np.sign(r[i] - r[j])
    de = np.sign(e[i] - e[j])
    prod = dr * de
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    ties_truth = int(((dr == 0) & (de != 0)).sum())
    ties_estimate = int(((de == 0) & (dr != 0)).sum())
    denom = (concordant + discordant + ties_truth) * (concordant + discordant + ties_estimate)
    if denom == 0:
        raise UndefinedCorrelationError("a rank vector is constant")
    return (concordant - discordant) / math.sqrt(denom)


def jaccard_topk(pair: RankPair, k: int) -> float:
    """Jaccard similarity of the two top-k model sets.

    A model belongs to a top-k set when its fractional rank is <= k, so a
    tied group straddling the boundary enters whole and the set may exceed
    k models (or, for a tie at the very top, leave it empty; two empty sets
    count as identical).
    """
    n = len(pair.truth.models())
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    top_truth = {e.model for e in pair.truth.entries if e.rank <= k}
    top_est = {e.model for e in pair.estimate.entries if e.rank <= k}
    union = top_truth | top_est
    if not union:
        return 1.0
    return len(top_truth & top_est) / len(union)


def _batch_rho(r: np.ndarray, perms: np.ndarray) -> np.ndarray:
    rc = r - r.mean()
    pc = perms - perms.mean(axis=1, keepdims=True)
    denom = np.sqrt(float(rc @ rc) * (pc * pc).sum(axis=1))
    return (pc @ rc) / denom


def spearman_pvalue(pair: RankPair, permutations: int = 10_000, seed: int = 0) -> float:
    """Two-sided permutation p-value for the observed Spearman correlation.

    For n <= 7 models every permutation of the estimate is enumerated and the
    p-value is the exact fraction with |rho| at least as extreme.  Otherwise
    ``permutations`` random permutations are drawn (seeded) and the add-one
    corrected fraction (count + 1) / (permutations + 1) is returned.
    """
    if permutations < 1000:
        raise ValueError("permutations must be at least 1000")
    r, e = pair.rank_vectors()
    observed = abs(_rho(r, e))
    threshold = observed - 1e-12
    n = len(r)
    if n <= _EXACT_ENUMERATION_MAX:
        perms = np.array(list(itertools.permutations(e)), dtype=np.float64)
        count = int((np.abs(_batch_rho(r, perms)) >= threshold).sum())
        return count / perms.shape[0]
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(e, (permutations, 1)), axis=1)
    count = int((np.abs(_batch_rho(r, perms)) >= threshold).sum())
    return (count + 1) / (permutations + 1)
