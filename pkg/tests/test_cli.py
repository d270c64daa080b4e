"""Command-line interface: exit codes, file outputs, determinism."""

import json

import pytest

from labelfree.cli import main
from labelfree.core import Ranking, rank_from_scores
from labelfree.matrix import format_ground_truth_csv, format_predictions_csv
from labelfree.synth import SynthSpec, generate


@pytest.fixture
def small_case(tmp_path):
    spec = SynthSpec(num_models=5, num_samples=120, num_classes=4,
                     accuracies=(0.4, 0.9), seed=21)
    matrix, truth = generate(spec)
    pred = tmp_path / "predictions.csv"
    gt = tmp_path / "truth.csv"
    pred.write_text(format_predictions_csv(matrix), encoding="utf-8")
    gt.write_text(format_ground_truth_csv(truth), encoding="utf-8")
    return pred, gt


class TestRank:
    def test_writes_json_ranking(self, small_case, tmp_path):
        pred, _ = small_case
        out = tmp_path / "ranking.json"
        assert main(["rank", "--predictions", str(pred), "--out", str(out)]) == 0
        ranking = Ranking.from_json(out.read_text())
        assert len(ranking.entries) == 5
        assert ranking.converged is not None

    def test_csv_format(self, small_case, tmp_path):
        pred, _ = small_case
        out = tmp_path / "ranking.csv"
        assert main(["rank", "--predictions", str(pred), "--out", str(out),
                     "--format", "csv"]) == 0
        assert out.read_text().splitlines()[0] == "model,score,rank"

    def test_unanimous_file_exits_2_with_warning(self, tmp_path, capsys):
        pred = tmp_path / "unanimous.csv"
        pred.write_text("sample_id,a,b\nx1,1,1\nx2,0,0\n", encoding="utf-8")
        out = tmp_path / "ranking.json"
        assert main(["rank", "--predictions", str(pred), "--out", str(out)]) == 2
        obj = json.loads(out.read_text())
        assert obj["warning"]
        assert {e["rank"] for e in obj["ranking"]} == {1.5}
        assert "warning" in capsys.readouterr().err

    def test_malformed_file_exits_1_naming_row(self, tmp_path, capsys):
        pred = tmp_path / "bad.csv"
        pred.write_text("sample_id,a,b\nx1,0,1\nx2,0\n", encoding="utf-8")
        assert main(["rank", "--predictions", str(pred)]) == 1
        assert "row x2" in capsys.readouterr().err

    def test_missing_file_exits_1(self, tmp_path, capsys):
        assert main(["rank", "--predictions", str(tmp_path / "nope.csv")]) == 1

    def test_reruns_are_byte_identical(self, small_case, tmp_path):
        pred, _ = small_case
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        main(["rank", "--predictions", str(pred), "--out", str(out1)])
        main(["rank", "--predictions", str(pred), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_json_input_accepted(self, tmp_path):
        spec = SynthSpec(num_models=4, num_samples=60, num_classes=3,
                         accuracies=(0.4, 0.9), seed=22)
        matrix, _ = generate(spec)
        from labelfree.matrix import format_predictions_json

        pred = tmp_path / "predictions.json"
        pred.write_text(format_predictions_json(matrix), encoding="utf-8")
        out = tmp_path / "ranking.json"
        assert main(["rank", "--predictions", str(pred), "--out", str(out)]) == 0


class TestSimulate:
    def test_writes_matrix_and_truth(self, tmp_path):
        pred = tmp_path / "m.csv"
        gt = tmp_path / "t.csv"
        rc = main([
            "simulate", "--models", "20", "--samples", "50", "--classes", "10",
            "--acc", "0.55:0.93", "--seed", "1",
            "--out-predictions", str(pred), "--out-truth", str(gt),
        ])
        assert rc == 0
        header = pred.read_text().splitlines()[1]
        assert header.count(",") == 20  # sample_id plus 20 model columns
        assert gt.read_text().splitlines()[0] == "sample_id,label"

    def test_identical_flags_identical_bytes(self, tmp_path):
        args = ["simulate", "--models", "4", "--samples", "30", "--classes", "3",
                "--acc", "0.3:0.9", "--seed", "9"]
        a_pred, a_gt = tmp_path / "a.csv", tmp_path / "a_t.csv"
        b_pred, b_gt = tmp_path / "b.csv", tmp_path / "b_t.csv"
        main(args + ["--out-predictions", str(a_pred), "--out-truth", str(a_gt)])
        main(args + ["--out-predictions", str(b_pred), "--out-truth", str(b_gt)])
        assert a_pred.read_bytes() == b_pred.read_bytes()
        assert a_gt.read_bytes() == b_gt.read_bytes()

    def test_single_class_rejected(self, tmp_path, capsys):
        rc = main([
            "simulate", "--models", "3", "--samples", "10", "--classes", "1",
            "--acc", "0.5:0.9",
            "--out-predictions", str(tmp_path / "m.csv"),
            "--out-truth", str(tmp_path / "t.csv"),
        ])
        assert rc == 1
        assert "classes" in capsys.readouterr().err

    def test_comma_list_accuracies(self, tmp_path):
        rc = main([
            "simulate", "--models", "3", "--samples", "20", "--classes", "4",
            "--acc", "0.9,0.6,0.75", "--seed", "2",
            "--out-predictions", str(tmp_path / "m.csv"),
            "--out-truth", str(tmp_path / "t.csv"),
        ])
        assert rc == 0


class TestMetrics:
    def write_ranking(self, path, scores, names=None):
        ranking = rank_from_scores(names or tuple(f"m{i}" for i in range(len(scores))), scores)
        path.write_text(ranking.to_json(), encoding="utf-8")

    def test_identical_rankings(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        self.write_ranking(a, (8.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.1))
        self.write_ranking(b, (8.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.1))
        out = tmp_path / "metrics.json"
        rc = main(["metrics", "--truth-ranking", str(a), "--estimate-ranking", str(b),
                   "--out", str(out)])
        assert rc == 0
        result = json.loads(out.read_text())
        assert result["spearman"] == pytest.approx(1.0)
        assert result["kendall"] == pytest.approx(1.0)
        assert all(v == 1.0 for v in result["jaccard"].values())
        assert result["p_value"] < 0.05

    def test_reversed_rankings(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        self.write_ranking(a, (4.0, 3.0, 2.0, 1.0))
        self.write_ranking(b, (1.0, 2.0, 3.0, 4.0))
        out = tmp_path / "metrics.json"
        main(["metrics", "--truth-ranking", str(a), "--estimate-ranking", str(b),
              "--out", str(out)])
        assert json.loads(out.read_text())["spearman"] == pytest.approx(-1.0)

    def test_name_mismatch_exits_1_listing_extras(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        self.write_ranking(a, (2.0, 1.0), names=("x", "y"))
        self.write_ranking(b, (2.0, 1.0), names=("x", "z"))
        assert main(["metrics", "--truth-ranking", str(a), "--estimate-ranking", str(b)]) == 1
        err = capsys.readouterr().err
        assert "y" in err and "z" in err

    def test_k_list_flag(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        self.write_ranking(a, (3.0, 2.0, 1.0))
        self.write_ranking(b, (3.0, 1.0, 2.0))
        out = tmp_path / "metrics.json"
        main(["metrics", "--truth-ranking", str(a), "--estimate-ranking", str(b),
              "--k", "1,2", "--out", str(out)])
        assert set(json.loads(out.read_text())["jaccard"]) == {"1", "2"}


class TestEval:
    def test_report_files_and_determinism(self, small_case, tmp_path, monkeypatch):
        monkeypatch.setenv("LAF_THREADS", "2")
        pred, gt = small_case
        per_rep = tmp_path / "reps.csv"
        agg = tmp_path / "agg.csv"
        args = ["eval", "--predictions", str(pred), "--truth", str(gt),
                "--methods", "laf,random", "--budgets", "10:30:10",
                "--reps", "2", "--seed", "7",
                "--per-rep-out", str(per_rep), "--aggregate-out", str(agg)]
        assert main(args) == 0
        first = per_rep.read_bytes(), agg.read_bytes()
        assert main(args) == 0
        assert (per_rep.read_bytes(), agg.read_bytes()) == first

        lines = per_rep.read_text().splitlines()
        assert lines[0].startswith("method,budget,repetition,spearman,kendall,jaccard_1")
        assert lines[1].startswith("laf,0,0,")
        # laf once plus 3 budgets x 2 reps of random
        assert len(lines) == 1 + 1 + 6

    def test_infeasible_budget_exits_1(self, small_case, tmp_path, capsys):
        pred, gt = small_case
        rc = main(["eval", "--predictions", str(pred), "--truth", str(gt),
                   "--methods", "sds", "--budgets", "200", "--reps", "1",
                   "--per-rep-out", str(tmp_path / "r.csv"),
                   "--aggregate-out", str(tmp_path / "a.csv")])
        assert rc == 1
        assert "sds" in capsys.readouterr().err
