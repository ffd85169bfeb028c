"""End-to-end CLI behaviour: subcommands, exit codes, artefacts."""
from __future__ import annotations

import json

import pytest

from conftest import MARTHA_TEXT, ScriptedBackend
from segann.cli import main
from segann.model import exact_result
from segann.stats import RunRecord, write_runs


@pytest.fixture
def prompt_file(tmp_path):
    path = tmp_path / "question.txt"
    path.write_text(MARTHA_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def dataset_file(tmp_path):
    path = tmp_path / "mini.jsonl"
    path.write_text(
        json.dumps({"id": "q1", "question": MARTHA_TEXT, "answer": "14", "dataset": "gsm8k"})
        + "\n",
        encoding="utf-8",
    )
    return path


def run_config(tmp_path, dataset_file, **overrides):
    config = {
        "dataset": str(dataset_file),
        "segmenter": {"kind": "fixed_k", "k": 3},
        "space": {"preset": "default"},
        "strategy": "exhaustive",
        "budget": {"trials_per_round": 40, "max_rounds": 1, "rng_seed": 0},
        "backend": "oracle:1,2,3",
        "output_dir": str(tmp_path / "runs"),
    }
    config.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


class TestSegment:
    def test_fixed_k_json(self, prompt_file, capsys):
        assert main(["segment", "--k", "3", str(prompt_file)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["segments"]) == 3
        assert "".join(payload["segments"]) == MARTHA_TEXT

    def test_sentences_on_two_sentence_file(self, tmp_path, capsys):
        path = tmp_path / "two.txt"
        path.write_text("One stands. Two sit.", encoding="utf-8")
        assert main(["segment", "--sentences", str(path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["segments"] == ["One stands. ", "Two sit."]

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = main(["segment", str(tmp_path / "absent.txt")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_infeasible_k_exits_2(self, tmp_path, capsys):
        path = tmp_path / "one.txt"
        path.write_text("Just one sentence.", encoding="utf-8")
        assert main(["segment", "--k", "5", str(path)]) == 2

    def test_delimiters(self, tmp_path, capsys):
        path = tmp_path / "d.txt"
        path.write_text("a|b|c", encoding="utf-8")
        assert main(["segment", str(path), "--delimiters", "|"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["segments"] == ["a|", "b|", "c"]

    def test_output_file(self, prompt_file, tmp_path):
        out = tmp_path / "seg.json"
        assert main(["segment", "--k", "2", str(prompt_file), "-o", str(out)]) == 0
        assert len(json.loads(out.read_text())["segments"]) == 2


class TestSpace:
    def test_count_default_three_segments(self, capsys):
        assert main(["space", "count", "--segments", "3"]) == 0
        assert capsys.readouterr().out.strip() == "1296"

    def test_count_full_preset(self, capsys):
        assert main(["space", "count", "--segments", "3", "--preset", "full"]) == 0
        assert capsys.readouterr().out.strip() == "1728"

    def test_enumerate_limit(self, capsys):
        assert main(["space", "enumerate", "--segments", "2", "--limit", "5"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 5
        first = json.loads(lines[0])
        assert first["assignment"] == [1, 1]

    def test_enumerate_full_stream_to_file(self, tmp_path):
        out = tmp_path / "configs.jsonl"
        assert main(
            ["space", "enumerate", "--segments", "1", "-o", str(out)]
        ) == 0
        assert len(out.read_text().splitlines()) == 144

    def test_space_config_file(self, tmp_path, capsys):
        config = tmp_path / "space.json"
        config.write_text(
            json.dumps(
                {
                    "annotation_types": [
                        {"name": "tone", "labels": ["", "soft", "loud"], "instruction": "t"}
                    ],
                    "brackets": ["square"],
                    "positions": ["prefix"],
                    "introductions": ["without"],
                }
            )
        )
        assert main(
            ["space", "count", "--segments", "2", "--config", str(config)]
        ) == 0
        assert capsys.readouterr().out.strip() == "9"


class TestOptimize:
    def test_oracle_run_writes_artifacts(self, tmp_path, dataset_file, capsys):
        config = run_config(tmp_path, dataset_file)
        assert main(["optimize", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "q1:" in out and "coverage=" in out
        run_dir = tmp_path / "runs"
        assert (run_dir / "q1.trials.jsonl").exists()
        assert (run_dir / "q1.best.txt").exists()
        assert (run_dir / "runs.jsonl").exists()

    def test_exhaustive_finds_planted_target(self, tmp_path, dataset_file):
        config = run_config(
            tmp_path,
            dataset_file,
            budget={"trials_per_round": 1296, "max_rounds": 2, "rng_seed": 0},
        )
        assert main(["optimize", "--config", str(config)]) == 0
        lines = (tmp_path / "runs" / "q1.trials.jsonl").read_text().splitlines()
        rows = [json.loads(line) for line in lines]
        assert len(rows) == 1297  # pinned neutral trial + the full grid
        best = [r for r in rows if r["is_new_best"]][-1]
        assert best["config"]["assignment"] == [1, 2, 3]
        assert best["score"]["score"] == 1.0

    def test_repeat_runs_are_byte_identical(self, tmp_path, dataset_file):
        config = run_config(
            tmp_path,
            dataset_file,
            strategy="greedy",
            budget={"trials_per_round": 30, "max_rounds": 2, "rng_seed": 5},
        )
        assert main(["optimize", "--config", str(config)]) == 0
        first = (tmp_path / "runs" / "q1.trials.jsonl").read_bytes()
        assert main(["optimize", "--config", str(config)]) == 0
        second = (tmp_path / "runs" / "q1.trials.jsonl").read_bytes()
        assert first == second

    def test_flag_overrides(self, tmp_path, dataset_file):
        config = run_config(tmp_path, dataset_file)
        out2 = tmp_path / "other"
        assert main(
            [
                "optimize", "--config", str(config),
                "--strategy", "random", "--trials", "7", "--out", str(out2),
            ]
        ) == 0
        rows = [
            json.loads(line)
            for line in (out2 / "q1.trials.jsonl").read_text().splitlines()
        ]
        assert len(rows) == 8  # neutral + 7 random proposals

    def test_assignment_subspace_summary(self, tmp_path, dataset_file, capsys):
        """Exhaustive over a single-type, levels-only grid: 27 trials plus
        the pinned neutral, full coverage."""
        space = {
            "annotation_types": [
                {
                    "name": "importance",
                    "labels": ["not important", "important", "very important"],
                }
            ],
            "brackets": ["square"],
            "positions": ["suffix"],
            "introductions": ["without"],
        }
        config = run_config(
            tmp_path,
            dataset_file,
            space=space,
            budget={"trials_per_round": 27, "max_rounds": 2, "rng_seed": 0},
        )
        assert main(["optimize", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "coverage=100.00%" in out
        lines = (tmp_path / "runs" / "q1.trials.jsonl").read_text().splitlines()
        assert len(lines) == 28  # neutral + the 27 labellings

    def test_budget_five_heuristic_coverage(self, tmp_path, dataset_file, capsys):
        space = {
            "annotation_types": [
                {
                    "name": "importance",
                    "labels": ["not important", "important", "very important"],
                }
            ],
            "brackets": ["square"],
            "positions": ["suffix"],
            "introductions": ["without"],
        }
        config = run_config(
            tmp_path,
            dataset_file,
            space=space,
            strategy="greedy",
            budget={"trials_per_round": 5, "max_rounds": 1, "rng_seed": 0},
        )
        assert main(["optimize", "--config", str(config)]) == 0
        assert "coverage=18.52%" in capsys.readouterr().out

    def test_bad_oracle_target_exits_2(self, tmp_path, dataset_file):
        config = run_config(tmp_path, dataset_file, backend="oracle:1,2")
        assert main(["optimize", "--config", str(config)]) == 2

    def test_unknown_strategy_exits_2(self, tmp_path, dataset_file):
        config = run_config(tmp_path, dataset_file, strategy="quantum")
        assert main(["optimize", "--config", str(config)]) == 2


class TestAnnotateLlm:
    def backend_file(self, tmp_path):
        path = tmp_path / "backend.json"
        path.write_text(json.dumps({"endpoint": "https://example.test", "model_name": "m"}))
        return path

    def test_accepted_annotation(self, tmp_path, prompt_file, capsys, monkeypatch):
        annotated = MARTHA_TEXT.replace(
            "8 people couldn't come",
            "[total invited: 24] 8 people couldn't come",
        )
        monkeypatch.setattr(
            "segann.cli.HttpChatBackend.from_config",
            classmethod(lambda cls, cfg, **kw: ScriptedBackend([annotated])),
        )
        code = main(
            ["annotate-llm", str(prompt_file), "--backend", str(self.backend_file(tmp_path))]
        )
        assert code == 0
        captured = capsys.readouterr()
        assert captured.out.strip() == annotated
        assert "warning" not in captured.err

    def test_rejected_annotation_warns(self, tmp_path, prompt_file, capsys, monkeypatch):
        monkeypatch.setattr(
            "segann.cli.HttpChatBackend.from_config",
            classmethod(lambda cls, cfg, **kw: ScriptedBackend(["something else entirely"])),
        )
        code = main(
            ["annotate-llm", str(prompt_file), "--backend", str(self.backend_file(tmp_path))]
        )
        assert code == 0
        captured = capsys.readouterr()
        assert captured.out.strip() == MARTHA_TEXT
        assert "bracket-residue" in captured.err

    def test_unknown_preset_exits_2(self, tmp_path, prompt_file):
        code = main(
            [
                "annotate-llm", str(prompt_file),
                "--backend", str(self.backend_file(tmp_path)),
                "--preset", "nonexistent",
            ]
        )
        assert code == 2


def make_log(path, method, datasets, quality):
    records = []
    for di, dataset in enumerate(datasets):
        for pi in range(3):
            correct = max(0, min(10, quality - di - (pi % 2)))
            records.append(
                RunRecord(
                    run_id=f"{method}",
                    prompt_id=f"{dataset}-p{pi}",
                    method=method,
                    dataset=dataset,
                    score=exact_result(correct, 10),
                    timestamp="2026-01-01T00:00:00+00:00",
                    config_digest="d",
                )
            )
    write_runs(records, path)
    return path


class TestReport:
    def test_two_methods_three_datasets(self, tmp_path, capsys):
        datasets = ("alpha", "beta", "gamma")
        log1 = make_log(tmp_path / "m1.jsonl", "greedy", datasets, quality=9)
        log2 = make_log(tmp_path / "m2.jsonl", "random", datasets, quality=6)
        out = tmp_path / "report"
        code = main(["report", str(log1), str(log2), "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "Friedman test" in text
        assert "methods k=2, blocks N=3" in text
        assert "Nemenyi critical difference" in text
        assert (out / "report.txt").exists()
        assert (out / "summary.csv").exists()
        assert (out / "accuracy.png").exists()
        assert (out / "ranks_cd.png").exists()

    def test_single_method_notice_without_test(self, tmp_path, capsys):
        log = make_log(tmp_path / "m1.jsonl", "greedy", ("alpha", "beta"), quality=8)
        out = tmp_path / "report"
        code = main(["report", str(log), "--out", str(out), "--no-figures"])
        assert code == 0
        text = capsys.readouterr().out
        assert "notice" in text
        assert "Friedman test" not in text or "needs" in text
        assert not (out / "ranks_cd.png").exists()

    def test_duplicate_keys_exit_2(self, tmp_path):
        log1 = make_log(tmp_path / "a.jsonl", "m", ("alpha", "beta"), quality=8)
        log2 = make_log(tmp_path / "b.jsonl", "m", ("alpha", "beta"), quality=8)
        assert main(["report", str(log1), str(log2), "--out", str(tmp_path / "r")]) == 2

    def test_csv_contents(self, tmp_path):
        log = make_log(tmp_path / "m1.jsonl", "greedy", ("alpha", "beta"), quality=8)
        out = tmp_path / "report"
        main(["report", str(log), "--out", str(out), "--no-figures"])
        csv_lines = (out / "summary.csv").read_text().splitlines()
        assert csv_lines[0] == "method,dataset,runs,mean_pct,std_pct"
        assert len(csv_lines) == 3
