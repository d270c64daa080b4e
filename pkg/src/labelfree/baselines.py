"""Label-consuming reference rankers and the budget-sweep experiment harness.

Two baselines are provided: uniform random sampling of a labeling budget, and
discrimination-based selection, which labels only samples that best separate
strong from weak models.  Both rank models by accuracy on the labeled subset,
so unlike the labeling-free ranker their output depends on a sampling seed.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import LafConfig, Ranking, rank_from_scores, run_laf, vote_labels
from .matrix import GroundTruth, PredictionMatrix
from .metrics import RankPair, ground_truth_ranking, jaccard_topk, kendall, spearman

__all__ = [
    "BudgetPlan",
    "DEFAULT_TOP_K",
    "random_rank",
    "sds_scores",
    "sds_rank",
    "ExperimentRow",
    "AggregateRow",
    "run_experiment",
    "aggregate_rows",
    "format_experiment_csv",
    "format_aggregate_csv",
]

DEFAULT_MAX_BUDGET = 180
DEFAULT_BUDGET_STEP = 5
DEFAULT_REPETITIONS = 50
DEFAULT_TOP_K = (1, 3, 5, 10)

METHOD_LAF = "laf"
METHOD_RANDOM = "random"
METHOD_SDS = "sds"
_METHOD_IDS = {METHOD_RANDOM: 1, METHOD_SDS: 2}


@dataclass(frozen=True)
class BudgetPlan:
    """Labeling budgets to sweep, repetitions per budget, and the base seed."""

    budgets: tuple[int, ...]
    repetitions: int = DEFAULT_REPETITIONS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise ValueError("budgets must be positive integers")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")

    @classmethod
    def default_for(cls, matrix: PredictionMatrix, repetitions: int = DEFAULT_REPETITIONS,
                    seed: int = 0) -> "BudgetPlan":
        """Budgets from the model count up to 180 in steps of 5, capped at m."""
        stop = min(DEFAULT_MAX_BUDGET, matrix.num_samples)
        budgets = tuple(range(matrix.num_models, stop + 1, DEFAULT_BUDGET_STEP))
        if not budgets:
            budgets = (matrix.num_samples,)
        return cls(budgets, repetitions, seed)


def _subset_accuracy_ranking(
    matrix: PredictionMatrix, truth: GroundTruth, indices: np.ndarray
) -> Ranking:
    aligned = truth.aligned_labels(matrix.sample_ids)
    correct = matrix.labels[indices] == aligned[indices, None]
    return rank_from_scores(matrix.model_names, correct.mean(axis=0))


def random_rank(
    matrix: PredictionMatrix, truth: GroundTruth, budget: int, seed: int
) -> Ranking:
    """Rank models by accuracy on ``budget`` uniformly drawn labeled samples."""
    if not 1 <= budget <= matrix.num_samples:
        raise ValueError(f"budget {budget} exceeds the {matrix.num_samples} available samples")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(matrix.num_samples, size=budget, replace=False)
    return _subset_accuracy_ranking(matrix, truth, chosen)


def sds_scores(matrix: PredictionMatrix, group_fraction: float = 0.27) -> np.ndarray:
    """Per-sample discrimination score, no labels required.

    Models are ranked by agreement with the majority-vote pseudo labels; each
    sample scores the fraction of the top group matching its pseudo label
    minus the fraction of the bottom group doing so.  Group size is
    ceil(group_fraction * n), the classical item-discrimination convention.
    """
    n = matrix.num_models
    if n < 4:
        raise ValueError(f"discrimination scores need at least 4 models, got {n}")
    if not 0 < group_fraction <= 0.5:
        raise ValueError("group_fraction must lie in (0, 0.5]")
    pseudo = vote_labels(matrix.labels)
    match = matrix.labels == pseudo[:, None]
    pseudo_acc = match.mean(axis=0)
    order = sorted(range(n), key=lambda j: (-pseudo_acc[j], matrix.model_names[j]))
    group = math.ceil(group_fraction * n)
    top = order[:group]
    bottom = order[-group:]
    return match[:, top].mean(axis=1) - match[:, bottom].mean(axis=1)


def sds_rank(
    matrix: PredictionMatrix,
    truth: GroundTruth,
    budget: int,
    seed: int,
    group_fraction: float = 0.27,
    pool_fraction: float = 0.25,
) -> Ranking:
    """Rank models by accuracy on labeled samples drawn from the most
    discriminating pool.

    The pool is the top ``pool_fraction`` of samples by discrimination score,
    ties at the cutoff broken by sample id; ``budget`` of them are drawn
    uniformly (seeded) and labeled.
    """
    scores = sds_scores(matrix, group_fraction)
    pool_size = math.ceil(pool_fraction * matrix.num_samples)
    if not 1 <= budget <= pool_size:
        raise ValueError(f"budget {budget} exceeds the discrimination pool of {pool_size}")
    ids = np.array(matrix.sample_ids, dtype=object)
    pool = np.lexsort((ids, -scores))[:pool_size]
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pool, size=budget, replace=False)
    return _subset_accuracy_ranking(matrix, truth, chosen)


# ---------------------------------------------------------------------------
# budget-sweep experiment
# ---------------------------------------------------------------------------


@dataclass
class ExperimentRow:
    method: str
    budget: int
    repetition: int
    spearman: float
    kendall: float
    jaccard: dict[int, float]


@dataclass
class AggregateRow:
    method: str
    budget: int
    spearman_mean: float
    spearman_std: float
    kendall_mean: float
    kendall_std: float
    jaccard_mean: dict[int, float]
    jaccard_std: dict[int, float]


def derive_seed(base_seed: int, method: str, budget: int, repetition: int) -> int:
    """Stable per-(method, budget, repetition) seed from one base seed."""
    key = (_METHOD_IDS[method], budget, repetition)
    return int(np.random.SeedSequence(base_seed, spawn_key=key).generate_state(1)[0])


def _usable_top_k(k_values: Iterable[int], n: int) -> tuple[int, ...]:
    return tuple(k for k in k_values if 1 <= k <= n)


def _measure(reference: Ranking, estimate: Ranking, ks: tuple[int, ...],
             method: str, budget: int, repetition: int) -> ExperimentRow:
    pair = RankPair(reference, estimate)
    return ExperimentRow(
        method=method,
        budget=budget,
        repetition=repetition,
        spearman=spearman(pair),
        kendall=kendall(pair),
        jaccard={k: jaccard_topk(pair, k) for k in ks},
    )


def run_experiment(
    matrix: PredictionMatrix,
    truth: GroundTruth,
    methods: Sequence[str],
    plan: BudgetPlan,
    laf_config: LafConfig | None = None,
    k_values: Sequence[int] = DEFAULT_TOP_K,
    max_workers: int | None = None,
) -> list[ExperimentRow]:
    """Score every method against the ground-truth ranking.

    The labeling-free ranker runs once and is reported with budget 0; each
    baseline runs once per (budget, repetition) with a derived seed.  Rows
    come back ordered by (method, budget, repetition) regardless of worker
    count.
    """
    unknown = [m for m in methods if m not in (METHOD_LAF, METHOD_RANDOM, METHOD_SDS)]
    if unknown:
        raise ValueError("unknown methods: " + ", ".join(unknown))
    for budget in plan.budgets:
        if METHOD_RANDOM in methods and budget > matrix.num_samples:
            raise ValueError(f"method random: budget {budget} exceeds {matrix.num_samples} samples")
        if METHOD_SDS in methods:
            pool = math.ceil(0.25 * matrix.num_samples)
            if budget > pool:
                raise ValueError(f"method sds: budget {budget} exceeds the 25% pool of {pool}")

    reference = ground_truth_ranking(matrix, truth)
    ks = _usable_top_k(k_values, matrix.num_models)
    rows: list[ExperimentRow] = []
    if METHOD_LAF in methods:
        rows.append(_measure(reference, run_laf(matrix, laf_config), ks, METHOD_LAF, 0, 0))

    tasks = [
        (method, budget, rep)
        for method in methods
        if method != METHOD_LAF
        for budget in plan.budgets
        for rep in range(plan.repetitions)
    ]

    def work(task: tuple[str, int, int]) -> ExperimentRow:
        method, budget, rep = task
        seed = derive_seed(plan.seed, method, budget, rep)
        if method == METHOD_RANDOM:
            estimate = random_rank(matrix, truth, budget, seed)
        else:
            estimate = sds_rank(matrix, truth, budget, seed)
        return _measure(reference, estimate, ks, method, budget, rep)

    if max_workers is not None and max_workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows.extend(pool.map(work, tasks))
    else:
        rows.extend(work(t) for t in tasks)
    return rows


def aggregate_rows(rows: Sequence[ExperimentRow]) -> list[AggregateRow]:
    """Mean and sample standard deviation per (method, budget), in first-seen order."""
    groups: dict[tuple[str, int], list[ExperimentRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.budget), []).append(row)

    def stats(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values)
        return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0

    out = []
    for (method, budget), grp in groups.items():
        sp_mean, sp_std = stats([r.spearman for r in grp])
        kd_mean, kd_std = stats([r.kendall for r in grp])
        ks = sorted(grp[0].jaccard)
        j_mean, j_std = {}, {}
        for k in ks:
            j_mean[k], j_std[k] = stats([r.jaccard[k] for r in grp])
        out.append(AggregateRow(method, budget, sp_mean, sp_std, kd_mean, kd_std, j_mean, j_std))
    return out


def format_experiment_csv(rows: Sequence[ExperimentRow]) -> str:
    """One row per repetition: method,budget,repetition,spearman,kendall,jaccard_k..."""
    ks = sorted(rows[0].jaccard) if rows else []
    buf = io.StringIO()
    buf.write("method,budget,repetition,spearman,kendall")
    buf.write("".join(f",jaccard_{k}" for k in ks) + "\n")
    for r in rows:
        buf.write(f"{r.method},{r.budget},{r.repetition},{r.spearman!r},{r.kendall!r}")
        buf.write("".join(f",{r.jaccard[k]!r}" for k in ks) + "\n")
    return buf.getvalue()


def format_aggregate_csv(rows: Sequence[AggregateRow]) -> str:
    ks = sorted(rows[0].jaccard_mean) if rows else []
    buf = io.StringIO()
    buf.write("method,budget,spearman_mean,spearman_std,kendall_mean,kendall_std")
    buf.write("".join(f",jaccard_{k}_mean,jaccard_{k}_std" for k in ks) + "\n")
    for r in rows:
        buf.write(
            f"{r.method},{r.budget},{r.spearman_mean!r},{r.spearman_std!r},"
            f"{r.kendall_mean!r},{r.kendall_std!r}"
        )
        buf.write("".join(f",{r.jaccard_mean[k]!r},{r.jaccard_std[k]!r}" for k in ks) + "\n")
    return buf.getvalue()
