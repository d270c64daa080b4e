"""Rank classification models from their predicted labels alone.

The package infers a per-model skill score from an unlabeled prediction
matrix (EM over latent true labels), ships two label-consuming baseline
rankers, rank-agreement metrics, and a seeded synthetic-matrix generator.
"""

from .baselines import (
    BudgetPlan,
    aggregate_rows,
    random_rank,
    run_experiment,
    sds_rank,
    sds_scores,
)
from .core import (
    LafConfig,
    LafFit,
    LafParams,
    PosteriorTable,
    RankEntry,
    Ranking,
    compute_q,
    e_step,
    fit_laf,
    init_params,
    m_step,
    majority_vote,
    q_gradient,
    rank_from_scores,
    run_laf,
    vote_labels,
)
from .matrix import (
    GroundTruth,
    NoDiscriminatingDataError,
    ParseError,
    PredictionMatrix,
    PrunedMatrix,
    format_ground_truth_csv,
    format_predictions_csv,
    format_predictions_json,
    parse_ground_truth_csv,
    parse_predictions,
    parse_predictions_csv,
    parse_predictions_json,
    prune,
)
from .metrics import (
    RankPair,
    UndefinedCorrelationError,
    ground_truth_ranking,
    jaccard_topk,
    kendall,
    spearman,
    spearman_pvalue,
)
from .synth import SynthSpec, generate, realized_accuracy

__version__ = "0.1.0"
