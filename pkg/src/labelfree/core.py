"""Labeling-free model ranking via EM over per-sample difficulty and per-model skill.

Given only a pruned prediction matrix, the ranker treats each sample's unknown
true label as a latent variable.  The chance that model j predicts sample i
correctly is sigmoid(alpha_i * beta_j), where alpha_i is an inverse-difficulty
score (larger = easier) and beta_j a model-skill score (larger = better); a
wrong prediction lands uniformly on one of the other C-1 classes.  Starting
from majority-vote estimates, EM alternates a posterior pass over candidate
true labels (E-step) with backtracking gradient ascent on the EM objective
(M-step) until the relative change in the objective falls below tolerance.
Models are then ranked by beta.

The EM objective reported by :func:`compute_q` is the evidence lower bound:
the expected complete-data log-likelihood under the current posterior plus
that posterior's entropy.  With the entropy term the value is exactly
maximized over distributions by the E-step posterior, and the value sequence
across outer iterations is non-decreasing by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matrix import NoDiscriminatingDataError, PredictionMatrix, PrunedMatrix, prune

__all__ = [
    "LafConfig",
    "LafParams",
    "PosteriorTable",
    "RankEntry",
    "Ranking",
    "LafFit",
    "UNANIMOUS_WARNING",
    "vote_labels",
    "majority_vote",
    "init_params",
    "e_step",
    "compute_q",
    "q_gradient",
    "m_step",
    "fit_laf",
    "run_laf",
    "rank_from_scores",
]

UNANIMOUS_WARNING = "all model predictions unanimous; reporting all models tied"

_MAX_HALVINGS = 30
_DENSE_VOTE_CELLS = 20_000_000


@dataclass(frozen=True)
class LafConfig:
    """Knobs for the EM ranker; defaults are sensible for any matrix size.

    prior: "uniform" spreads prior mass 1/C over classes; "empirical" uses
        majority-vote label frequencies (floored at prob_floor).
    seed: reserved for future stochastic variants; the default path is
        fully deterministic and ignores it.
    """

    prior: str = "uniform"
    convergence_tol: float = 1e-5
    max_outer_iters: int = 500
    m_step_inner_iters: int = 25
    initial_step: float = 0.1
    prob_floor: float = 1e-12
    seed: int | None = None

    def __post_init__(self):
        if self.prior not in ("uniform", "empirical"):
            raise ValueError(f"prior must be 'uniform' or 'empirical', got {self.prior!r}")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_outer_iters < 1 or self.m_step_inner_iters < 1:
            raise ValueError("iteration caps must be positive")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if not 0 < self.prob_floor < 0.5:
            raise ValueError("prob_floor must lie in (0, 0.5)")


@dataclass(frozen=True)
class LafParams:
    """Per-sample inverse difficulty (alpha) and per-model skill (beta)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if alpha.ndim != 1 or beta.ndim != 1:
            raise ValueError("alpha and beta must be 1-d")
        if not (np.isfinite(alpha).all() and np.isfinite(beta).all()):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class PosteriorTable:
    """Per-sample posterior over candidate true labels.

    Row i covers the distinct labels predicted for sample i (``candidates``,
    sorted, padded with -1) with probabilities in ``probs`` (padded with 0).
    The remaining ``other_multiplicity[i]`` never-predicted classes share the
    single probability ``other_prob[i]`` each, so a row's total mass is
    ``probs[i].sum() + other_multiplicity[i] * other_prob[i]``.
    """

    candidates: np.ndarray
    probs: np.ndarray
    other_multiplicity: np.ndarray
    other_prob: np.ndarray

    def row_totals(self) -> np.ndarray:
        return self.probs.sum(axis=1) + self.other_multiplicity * self.other_prob

    def row(self, i: int) -> tuple[dict[int, float], int, float]:
        """(candidate label -> probability, other multiplicity, other per-class prob)."""
        valid = self.candidates[i] >= 0
        cand = {
            int(c): float(p) for c, p in zip(self.candidates[i][valid], self.probs[i][valid])
        }
        return cand, int(self.other_multiplicity[i]), float(self.other_prob[i])


@dataclass(frozen=True)
class RankEntry:
    model: str
    score: float
    rank: float


@dataclass(frozen=True)
class Ranking:
    """Models ordered by descending score; tied scores share averaged ranks."""

    entries: tuple[RankEntry, ...]
    converged: bool | None = None
    iterations: int | None = None
    warning: str | None = None

    def models(self) -> tuple[str, ...]:
        return tuple(e.model for e in self.entries)

    def rank_of(self) -> dict[str, float]:
        return {e.model: e.rank for e in self.entries}

    def score_of(self) -> dict[str, float]:
        return {e.model: e.score for e in self.entries}

    def to_json(self) -> str:
        obj = {
            "ranking": [
                {"model": e.model, "score": e.score, "rank": e.rank} for e in self.entries
            ],
            "converged": self.converged,
            "iterations": self.iterations,
            "warning": self.warning,
        }
        return json.dumps(obj, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["model,score,rank"]
        for e in self.entries:
            lines.append(f"{e.model},{e.score!r},{e.rank!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Ranking":
        obj = json.loads(text)
        entries = tuple(
            RankEntry(str(r["model"]), float(r["score"]), float(r["rank"]))
            for r in obj["ranking"]
        )
        return cls(
            entries,
            converged=obj.get("converged"),
            iterations=obj.get("iterations"),
            warning=obj.get("warning"),
        )

    @classmethod
    def from_csv(cls, text: str) -> "Ranking":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != "model,score,rank":
            raise ValueError("expected header 'model,score,rank'")
        entries = []
        for ln in lines[1:]:
            model, score, rank = ln.split(",")
            entries.append(RankEntry(model, float(score), float(rank)))
        return cls(tuple(entries))


def rank_from_scores(
    names: Sequence[str],
    scores: Sequence[float],
    *,
    converged: bool | None = None,
    iterations: int | None = None,
    warning: str | None = None,
) -> Ranking:
    """Rank models by descending score.

    Tied scores receive the average of the ranks they span; among equal
    scores, entries are ordered by model name so output is deterministic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(names) != len(scores):
        raise ValueError("names and scores must have equal length")
    if np.isnan(scores).any():
        raise ValueError("scores must not contain NaN")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], names[i]))
    entries: list[RankEntry] = []
    pos = 0
    while pos < len(order):
        end = pos
        while end < len(order) and scores[order[end]] == scores[order[pos]]:
            end += 1
        avg_rank = (pos + 1 + end) / 2.0
        for i in order[pos:end]:
            entries.append(RankEntry(names[i], float(scores[i]), avg_rank))
        pos = end
    return Ranking(tuple(entries), converged=converged, iterations=iterations, warning=warning)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def vote_labels(labels: np.ndarray) -> np.ndarray:
    """Most frequent label in each row; ties go to the smallest label index."""
    labels = np.asarray(labels)
    m, _ = labels.shape
    num_classes = int(labels.max()) + 1
    if m * num_classes <= _DENSE_VOTE_CELLS:
        counts = np.zeros((m, num_classes), dtype=np.int64)
        np.add.at(counts, (np.arange(m)[:, None], labels), 1)
        return counts.argmax(axis=1)
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        out[i] = np.bincount(labels[i]).argmax()
    return out


def majority_vote(pruned: PrunedMatrix) -> np.ndarray:
    """Pseudo label of every retained sample, by majority vote over models."""
    return vote_labels(pruned.inner.labels)


def init_params(pruned: PrunedMatrix, pseudo: np.ndarray) -> LafParams:
    """Majority-vote starting point.

    beta_j is model j's agreement rate with the pseudo labels; alpha_i is the
    fraction of models agreeing with sample i's pseudo label, so that larger
    alpha marks an easier sample.
    """
    match = pruned.inner.labels == np.asarray(pseudo)[:, None]
    return LafParams(alpha=match.mean(axis=1), beta=match.mean(axis=0))


# ---------------------------------------------------------------------------
# EM internals
# ---------------------------------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class _Workspace:
    """Candidate-label bookkeeping shared by the E-step, Q, and gradients.

    Posteriors range over each sample's distinct predicted labels plus one
    aggregated "other" bucket for the never-predicted classes, which keeps
    cost independent of the class count.
    """

    labels: np.ndarray            # (m, n) retained predictions
    num_classes: int
    cand: np.ndarray              # (m, K) sorted distinct labels, -1 padded
    cand_mask: np.ndarray         # (m, K) True where cand is valid
    slot: np.ndarray              # (m, n) candidate column of each prediction
    other_mult: np.ndarray        # (m,) count of never-predicted classes
    log_prior_cand: np.ndarray    # (m, K) log prior of each candidate (0 on padding)
    log_prior_other: np.ndarray   # (m,) per-class log prior in the other bucket (-inf if empty)
    log_wrong_split: float        # log(C - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def _class_prior(pruned: PrunedMatrix, config: LafConfig) -> np.ndarray | None:
    """Prior over classes; None means exactly uniform."""
    if config.prior == "uniform":
        return None
    num_classes = pruned.inner.num_classes
    counts = np.bincount(majority_vote(pruned), minlength=num_classes).astype(np.float64)
    p = counts / counts.sum()
    p = np.maximum(p, config.prob_floor)
    return p / p.sum()


def _build_workspace(pruned: PrunedMatrix, config: LafConfig) -> _Workspace:
    lab = pruned.inner.labels
    m, n = lab.shape
    num_classes = pruned.inner.num_classes
    cand_rows = [np.unique(lab[i]) for i in range(m)]
    counts = np.fromiter((c.size for c in cand_rows), dtype=np.int64, count=m)
    width = int(counts.max())
    cand = np.full((m, width), -1, dtype=np.int64)
    slot = np.empty((m, n), dtype=np.int64)
    for i, row_cand in enumerate(cand_rows):
        cand[i, : row_cand.size] = row_cand
        slot[i] = np.searchsorted(row_cand, lab[i])
    cand_mask = cand >= 0
    other_mult = num_classes - counts

    prior = _class_prior(pruned, config)
    if prior is None:
        log_uniform = -math.log(num_classes)
        log_prior_cand = np.where(cand_mask, log_uniform, 0.0)
        with np.errstate(divide="ignore"):
            log_prior_other = np.where(other_mult > 0, log_uniform, -np.inf)
    else:
        log_prior_cand = np.zeros((m, width))
        prior_cand = np.where(cand_mask, prior[np.where(cand_mask, cand, 0)], 0.0)
        log_prior_cand[cand_mask] = np.log(prior_cand[cand_mask])
        # never-predicted classes share the mean residual prior mass, which
        # keeps them exchangeable within each row's aggregate bucket
        residual = np.clip(1.0 - prior_cand.sum(axis=1), 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            per_class = residual / np.maximum(other_mult, 1)
            log_prior_other = np.where(other_mult > 0, np.log(per_class), -np.inf)
    return _Workspace(
        labels=lab,
        num_classes=num_classes,
        cand=cand,
        cand_mask=cand_mask,
        slot=slot,
        other_mult=other_mult,
        log_prior_cand=log_prior_cand,
        log_prior_other=log_prior_other,
        log_wrong_split=math.log(num_classes - 1),
    )


def _likelihood_logs(
    ws: _Workspace, alpha: np.ndarray, beta: np.ndarray, config: LafConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped sigmoid matrix plus per-prediction log-correct / log-wrong."""
    z = alpha[:, None] * beta[None, :]
    s = _sigmoid(z)
    np.clip(s, config.prob_floor, 1.0 - config.prob_floor, out=s)
    log_s = np.log(s)
    log_w = np.log1p(-s)
    log_w -= ws.log_wrong_split
    return s, log_s, log_w


def _e_step(ws: _Workspace, params: LafParams, config: LafConfig) -> PosteriorTable:
    m, _ = ws.shape
    width = ws.cand.shape[1]
    _, log_s, log_w = _likelihood_logs(ws, params.alpha, params.beta, config)
    row_wrong = log_w.sum(axis=1)
    delta = log_s - log_w
    flat = (np.arange(m)[:, None] * width + ws.slot).ravel()
    ll_cand = np.bincount(flat, weights=delta.ravel(), minlength=m * width).reshape(m, width)
    ll_cand += row_wrong[:, None]

    w_cand = np.where(ws.cand_mask, ws.log_prior_cand + ll_cand, -np.inf)
    with np.errstate(divide="ignore"):
        log_mult = np.where(ws.other_mult > 0, np.log(np.maximum(ws.other_mult, 1)), -np.inf)
    w_other = ws.log_prior_other + row_wrong
    w_other_total = np.where(ws.other_mult > 0, log_mult + w_other, -np.inf)

    peak = np.maximum(w_cand.max(axis=1), w_other_total)
    e_cand = np.exp(np.where(ws.cand_mask, w_cand - peak[:, None], -np.inf))
    e_other = np.where(ws.other_mult > 0, np.exp(w_other_total - peak), 0.0)
    total = e_cand.sum(axis=1) + e_other
    probs = e_cand / total[:, None]
    other_prob = np.where(
        ws.other_mult > 0, (e_other / total) / np.maximum(ws.other_mult, 1), 0.0
    )
    return PosteriorTable(
        candidates=ws.cand,
        probs=probs,
        other_multiplicity=ws.other_mult,
        other_prob=other_prob,
    )


def _per_prediction_posterior(ws: _Workspace, posterior: PosteriorTable) -> np.ndarray:
    """q*[i, j]: posterior mass on the label model j predicted for sample i."""
    m, _ = ws.shape
    return posterior.probs[np.arange(m)[:, None], ws.slot]


def _q_likelihood(
    ws: _Workspace, qstar: np.ndarray, alpha: np.ndarray, beta: np.ndarray, config: LafConfig
) -> tuple[float, np.ndarray]:
    """Expected log-likelihood of the predictions under fixed q*, plus sigma."""
    s, log_s, log_w = _likelihood_logs(ws, alpha, beta, config)
    log_s -= log_w
    value = float(log_w.sum()) + float(qstar.ravel() @ log_s.ravel())
    return value, s


def _q_constant(ws: _Workspace, posterior: PosteriorTable) -> float:
    """Prior and entropy terms of the EM objective; independent of params."""
    probs = posterior.probs
    other_mass = posterior.other_multiplicity * posterior.other_prob
    live = other_mass > 0
    prior_part = float(np.sum(np.where(ws.cand_mask, probs * ws.log_prior_cand, 0.0)))
    prior_part += float(np.sum(other_mass[live] * ws.log_prior_other[live]))
    with np.errstate(divide="ignore", invalid="ignore"):
        ent_cand = np.where(probs > 0, probs * np.log(probs), 0.0)
    entropy = -float(np.sum(ent_cand))
    entropy -= float(np.sum(other_mass[live] * np.log(posterior.other_prob[live])))
    return prior_part + entropy


def e_step(pruned: PrunedMatrix, params: LafParams, config: LafConfig | None = None) -> PosteriorTable:
    """Posterior over candidate true labels at the current parameters.

    For each sample, candidate c gets mass proportional to
    prior(c) * prod_j L_ij(c), where L_ij(c) is sigmoid(alpha_i beta_j) when
    model j predicted c and (1 - sigmoid) / (C - 1) otherwise; computed in log
    space with a log-sum-exp normalization.
    """
    config = config or LafConfig()
    ws = _build_workspace(pruned, config)
    return _e_step(ws, params, config)


def compute_q(
    pruned: PrunedMatrix,
    posterior: PosteriorTable,
    params: LafParams,
    config: LafConfig | None = None,
) -> float:
    """EM objective: expected complete-data log-likelihood plus posterior entropy.

    Finite and <= 0.  With the posterior that :func:`e_step` just produced the
    value equals the observed-data log-likelihood and dominates the value
    under any other distribution over the same candidates.
    """
    config = config or LafConfig()
    ws = _build_workspace(pruned, config)
    qstar = _per_prediction_posterior(ws, posterior)
    value, _ = _q_likelihood(ws, qstar, params.alpha, params.beta, config)
    return value + _q_constant(ws, posterior)


def q_gradient(
    pruned: PrunedMatrix,
    posterior: PosteriorTable,
    params: LafParams,
    config: LafConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`compute_q` in (alpha, beta) at fixed posterior.

    dQ/d(alpha_i beta_j) reduces to q*_ij - sigmoid(alpha_i beta_j); entries
    where the sigmoid sits on its clamp contribute zero.
    """
    config = config or LafConfig()
    ws = _build_workspace(pruned, config)
    qstar = _per_prediction_posterior(ws, posterior)
    _, s = _q_likelihood(ws, qstar, params.alpha, params.beta, config)
    resid = _gradient_residual(qstar, s, config)
    return _grad_alpha(resid, params.beta), _grad_beta(resid, params.alpha)


def _gradient_residual(qstar: np.ndarray, s: np.ndarray, config: LafConfig) -> np.ndarray:
    active = (s > config.prob_floor) & (s < 1.0 - config.prob_floor)
    return np.where(active, qstar - s, 0.0)


def _grad_alpha(resid: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return (resid * beta[None, :]).sum(axis=1)


def _grad_beta(resid: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return (resid * alpha[:, None]).sum(axis=0)


def _m_step(
    ws: _Workspace, posterior: PosteriorTable, params: LafParams, config: LafConfig
) -> LafParams:
    m, _ = ws.shape
    qstar = _per_prediction_posterior(ws, posterior)
    alpha = params.alpha.copy()
    beta = params.beta.copy()
    current, s = _q_likelihood(ws, qstar, alpha, beta, config)
    for _ in range(config.m_step_inner_iters):
        resid = _gradient_residual(qstar, s, config)
        step_alpha = _grad_alpha(resid, beta)
        # beta ascends along the per-sample mean so the update is invariant
        # to duplicating the sample set
        step_beta = _grad_beta(resid, alpha) / m
        if not step_alpha.any() and not step_beta.any():
            break
        step = config.initial_step
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand_alpha = alpha + step * step_alpha
            cand_beta = beta + step * step_beta
            value, s_new = _q_likelihood(ws, qstar, cand_alpha, cand_beta, config)
            if value >= current:
                alpha, beta, current, s = cand_alpha, cand_beta, value, s_new
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return LafParams(alpha, beta)


def m_step(
    pruned: PrunedMatrix,
    posterior: PosteriorTable,
    params: LafParams,
    config: LafConfig | None = None,
) -> LafParams:
    """Backtracking gradient ascent on the EM objective at a fixed posterior.

    Runs up to ``m_step_inner_iters`` joint updates of (alpha, beta); each
    update tries ``initial_step`` along the gradient and halves the step, up
    to 30 times, whenever it would lower the objective, abandoning the update
    after that.  Never returns parameters with a lower objective.
    """
    config = config or LafConfig()
    ws = _build_workspace(pruned, config)
    return _m_step(ws, posterior, params, config)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LafFit:
    """Everything the EM loop produced.

    ``pruned`` holds the retained rows in canonical order (sample ids sorted
    ascending); ``params.alpha`` aligns with those rows and ``params.beta``
    with the input matrix's model order.  ``q_trace`` starts at the
    initialization objective and appends one value per outer iteration.
    """

    params: LafParams
    posterior: PosteriorTable
    q_trace: tuple[float, ...]
    converged: bool
    iterations: int
    pruned: PrunedMatrix


def _canonical_matrix(matrix: PredictionMatrix) -> tuple[PredictionMatrix, np.ndarray]:
    """Rows sorted by sample id, columns by model name.

    All EM reductions then run in an input-order-independent sequence, which
    makes run_laf bit-exact under row and column permutations.  Returns the
    canonical matrix and the positions of the canonical columns in the input.
    """
    row_order = np.argsort(np.array(matrix.sample_ids, dtype=object), kind="stable")
    col_order = np.argsort(np.array(matrix.model_names, dtype=object), kind="stable")
    canon = PredictionMatrix(
        tuple(matrix.model_names[j] for j in col_order),
        tuple(matrix.sample_ids[i] for i in row_order),
        matrix.labels[np.ix_(row_order, col_order)],
        matrix.num_classes,
    )
    return canon, col_order


def fit_laf(matrix: PredictionMatrix, config: LafConfig | None = None) -> LafFit:
    """Run the full EM pipeline and return parameters plus diagnostics.

    Raises :class:`NoDiscriminatingDataError` when every row is unanimous;
    :func:`run_laf` converts that case into an all-tied ranking.
    """
    config = config or LafConfig()
    canon, col_order = _canonical_matrix(matrix)
    pruned = prune(canon)
    ws = _build_workspace(pruned, config)
    params = init_params(pruned, majority_vote(pruned))

    posterior = _e_step(ws, params, config)
    q_last = _q_likelihood(
        ws, _per_prediction_posterior(ws, posterior), params.alpha, params.beta, config
    )[0]
    q_last += _q_constant(ws, posterior)
    trace = [q_last]
    converged = False
    iterations = 0
    while iterations < config.max_outer_iters:
        params = _m_step(ws, posterior, params, config)
        posterior = _e_step(ws, params, config)
        q = _q_likelihood(
            ws, _per_prediction_posterior(ws, posterior), params.alpha, params.beta, config
        )[0]
        q += _q_constant(ws, posterior)
        iterations += 1
        trace.append(q)
        if abs((q - q_last) / q_last) <= config.convergence_tol:
            converged = True
            break
        q_last = q

    # map beta back to the caller's column order
    beta_input = np.empty_like(params.beta)
    beta_input[col_order] = params.beta
    return LafFit(
        params=LafParams(params.alpha, beta_input),
        posterior=posterior,
        q_trace=tuple(trace),
        converged=converged,
        iterations=iterations,
        pruned=pruned,
    )


def run_laf(matrix: PredictionMatrix, config: LafConfig | None = None) -> Ranking:
    """Rank models by inferred skill using nothing but their predicted labels.

    Deterministic: identical matrix and config give a bit-identical ranking.
    When every row is unanimous there is no signal, so all models are
    reported tied (equal scores, shared fractional rank) with a warning.
    """
    config = config or LafConfig()
    try:
        fit = fit_laf(matrix, config)
    except NoDiscriminatingDataError:
        n = matrix.num_models
        entries = tuple(
            RankEntry(name, 0.0, (n + 1) / 2.0) for name in sorted(matrix.model_names)
        )
        return Ranking(entries, converged=True, iterations=0, warning=UNANIMOUS_WARNING)
    return rank_from_scores(
        matrix.model_names,
        fit.params.beta,
        converged=fit.converged,
        iterations=fit.iterations,
    )
