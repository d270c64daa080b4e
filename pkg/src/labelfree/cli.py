"""Command-line front end: rank, eval, simulate, and metrics subcommands.

Exit codes: 0 success, 1 input error, 2 success with a degeneracy warning
(every sample unanimous, so all models are reported tied).  Every subcommand
is a deterministic function of its arguments and seeds; repeated invocations
produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .baselines import (
    DEFAULT_REPETITIONS,
    DEFAULT_TOP_K,
    BudgetPlan,
    aggregate_rows,
    format_aggregate_csv,
    format_experiment_csv,
    run_experiment,
)
from .core import LafConfig, Ranking, run_laf
from .matrix import (
    ParseError,
    format_ground_truth_csv,
    format_predictions_csv,
    format_predictions_json,
    parse_ground_truth_csv,
    parse_predictions,
)
from .metrics import RankPair, jaccard_topk, kendall, spearman, spearman_pvalue
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_DEGENERATE = 2


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; we need 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _parse_int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.split(",") if tok.strip() != ""]


def _parse_budgets(raw: str, num_models: int, num_samples: int) -> tuple[int, ...]:
    """``start:stop:step`` (inclusive stop) or a comma list; default n:180:5."""
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError(f"budget range must be start:stop:step, got {raw!r}")
        start, stop, step = (int(p) for p in parts)
        if step < 1:
            raise ValueError("budget step must be positive")
        budgets = tuple(range(start, stop + 1, step))
    else:
        budgets = tuple(_parse_int_list(raw))
    if not budgets:
        raise ValueError(f"no budgets in {raw!r}")
    return budgets


def _parse_accuracies(raw: str) -> tuple[float, ...]:
    sep = ":" if ":" in raw else ","
    values = tuple(float(tok) for tok in raw.split(sep) if tok.strip() != "")
    if not values:
        raise ValueError(f"no accuracies in {raw!r}")
    return values


def _laf_config(args: argparse.Namespace) -> LafConfig:
    return LafConfig(
        prior=args.prior,
        convergence_tol=args.tol,
        max_outer_iters=args.max_iters,
        m_step_inner_iters=args.inner_iters,
        initial_step=args.step,
        prob_floor=args.prob_floor,
    )


def _add_laf_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prior", choices=["uniform", "empirical"], default="uniform")
    parser.add_argument("--tol", type=float, default=1e-5, help="relative objective-change stop rule")
    parser.add_argument("--max-iters", type=int, default=500)
    parser.add_argument("--inner-iters", type=int, default=25)
    parser.add_argument("--step", type=float, default=0.1)
    parser.add_argument("--prob-floor", type=float, default=1e-12)


def _format_ranking(ranking: Ranking, fmt: str) -> str:
    return ranking.to_json() if fmt == "json" else ranking.to_csv()


def cmd_rank(args: argparse.Namespace) -> int:
    matrix = parse_predictions(_read_text(args.predictions))
    ranking = run_laf(matrix, _laf_config(args))
    _write_output(_format_ranking(ranking, args.format), args.out)
    if ranking.warning is not None:
        print(f"warning: {ranking.warning}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    matrix = parse_predictions(_read_text(args.predictions))
    truth = parse_ground_truth_csv(_read_text(args.truth))
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.budgets is None:
        plan = BudgetPlan.default_for(matrix, repetitions=args.reps, seed=args.seed)
    else:
        budgets = _parse_budgets(args.budgets, matrix.num_models, matrix.num_samples)
        plan = BudgetPlan(budgets, repetitions=args.reps, seed=args.seed)
    workers = int(os.environ.get("LAF_THREADS", os.cpu_count() or 1))
    rows = run_experiment(
        matrix,
        truth,
        methods,
        plan,
        laf_config=_laf_config(args),
        max_workers=workers,
    )
    _write_output(format_experiment_csv(rows), args.per_rep_out)
    _write_output(format_aggregate_csv(aggregate_rows(rows)), args.aggregate_out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        num_models=args.models,
        num_samples=args.samples,
        num_classes=args.classes,
        accuracies=_parse_accuracies(args.acc),
        hard_fraction=args.hard_fraction,
        hard_penalty=args.hard_penalty,
        seed=args.seed,
    )
    matrix, truth = generate(spec)
    if args.format == "json":
        _write_output(format_predictions_json(matrix), args.out_predictions)
    else:
        _write_output(format_predictions_csv(matrix), args.out_predictions)
    _write_output(format_ground_truth_csv(truth), args.out_truth)
    return EXIT_OK


def _load_ranking(path: str) -> Ranking:
    text = _read_text(path)
    if text.lstrip()[:1] == "{":
        return Ranking.from_json(text)
    return Ranking.from_csv(text)


def cmd_metrics(args: argparse.Namespace) -> int:
    truth_ranking = _load_ranking(args.truth_ranking)
    estimate_ranking = _load_ranking(args.estimate_ranking)
    pair = RankPair(truth_ranking, estimate_ranking)
    n = len(truth_ranking.models())
    if args.k is None:
        ks = [k for k in DEFAULT_TOP_K if k <= n]
    else:
        ks = _parse_int_list(args.k)
    result = {
        "spearman": spearman(pair),
        "kendall": kendall(pair),
        "jaccard": {str(k): jaccard_topk(pair, k) for k in ks},
        "p_value": spearman_pvalue(pair, args.permutations, args.pvalue_seed),
    }
    _write_output(json.dumps(result, indent=2) + "\n", args.out)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelfree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    rank = sub.add_parser("rank", help="rank models from predicted labels alone")
    rank.add_argument("--predictions", required=True, help="predictions CSV or JSON")
    rank.add_argument("--out", default=None, help="output path (default stdout)")
    rank.add_argument("--format", choices=["json", "csv"], default="json")
    _add_laf_flags(rank)
    rank.set_defaults(func=cmd_rank)

    ev = sub.add_parser("eval", help="sweep labeling budgets against ground truth")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--truth", required=True, help="ground-truth CSV")
    ev.add_argument("--methods", default="laf,random,sds")
    ev.add_argument("--budgets", default=None, help="start:stop:step or comma list (default n:180:5)")
    ev.add_argument("--reps", type=int, default=DEFAULT_REPETITIONS)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--per-rep-out", default="eval_repetitions.csv")
    ev.add_argument("--aggregate-out", default="eval_aggregate.csv")
    _add_laf_flags(ev)
    ev.set_defaults(func=cmd_eval)

    sim = sub.add_parser("simulate", help="generate a synthetic matrix with known truth")
    sim.add_argument("--models", type=int, required=True)
    sim.add_argument("--samples", type=int, required=True)
    sim.add_argument("--classes", type=int, required=True)
    sim.add_argument("--acc", required=True, help="low:high range or per-model comma list")
    sim.add_argument("--hard-fraction", type=float, default=0.0)
    sim.add_argument("--hard-penalty", type=float, default=0.5)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-predictions", required=True)
    sim.add_argument("--out-truth", required=True)
    sim.add_argument("--format", choices=["csv", "json"], default="csv")
    sim.set_defaults(func=cmd_simulate)

    met = sub.add_parser("metrics", help="compare two ranking files")
    met.add_argument("--truth-ranking", required=True)
    met.add_argument("--estimate-ranking", required=True)
    met.add_argument("--k", default=None, help="comma list of top-k sizes (default 1,3,5,10 capped at n)")
    met.add_argument("--permutations", type=int, default=10_000)
    met.add_argument("--pvalue-seed", type=int, default=0)
    met.add_argument("--out", default=None)
    met.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
