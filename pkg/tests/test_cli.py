import json
import math

import numpy as np
import pytest

from promptveil.cli import RunConfig, linear_fit, main
from promptveil.datasets import LabeledExample, save_corpus
from promptveil.errors import ConfigError
from promptveil.providers import HashMlmProvider


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture
def corpus_path(tmp_path):
    examples = [
        LabeledExample(text="Alice praised the Toronto office", label="Positive"),
        LabeledExample(text="Bob hated the rainy commute", label="Negative"),
        LabeledExample(text="the quarterly numbers looked fine", label="Positive"),
    ]
    path = tmp_path / "corpus.jsonl"
    save_corpus(examples, path)
    return path


class TestRunConfig:
    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"k": 0.1, "mystery_knob": 3}')
        with pytest.raises(ConfigError, match="mystery_knob"):
            RunConfig.from_file(str(path))

    def test_lambda_alias(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"lambda": 4}')
        assert RunConfig.from_file(str(path)).lambda_ == 4

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.from_file("/nope/zilch.json")


class TestDesensitizeCommand:
    def test_single_prompt_writes_one_record(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(
            ["desensitize", "--text", "Alice lives in Toronto", "--out", str(out), "--seed", "3"]
        )
        assert code == 0
        records = read_jsonl(out / "desensitized.jsonl")
        assert len(records) == 1
        assert "Toronto" not in records[0]["desensitized_text"]
        assert "timing" not in records[0]  # only with --emit-timing

    def test_missing_input_file_names_path(self, tmp_path, capsys):
        code = main(["desensitize", "--input", "/no/such/file.jsonl", "--out", str(tmp_path)])
        assert code == 2
        assert "/no/such/file.jsonl" in capsys.readouterr().err

    def test_k_zero_no_entities_is_identity(self, tmp_path):
        out = tmp_path / "out"
        text = "the cat sat on the mat"
        code = main(["desensitize", "--text", text, "--k", "0", "--out", str(out)])
        assert code == 0
        record = read_jsonl(out / "desensitized.jsonl")[0]
        assert record["desensitized_text"] == text
        assert record["replacements"] == []

    def test_corpus_input(self, tmp_path, corpus_path):
        out = tmp_path / "out"
        code = main(
            ["desensitize", "--input", str(corpus_path), "--out", str(out), "--seed", "1"]
        )
        assert code == 0
        assert len(read_jsonl(out / "desensitized.jsonl")) == 3

    def test_requires_text_or_input(self, tmp_path, capsys):
        assert main(["desensitize", "--out", str(tmp_path)]) == 2


class TestAttackCommand:
    def run_chain(self, tmp_path, corpus_path, attacks="ei,mti,pii"):
        out = tmp_path / "out"
        assert main(
            ["desensitize", "--input", str(corpus_path), "--out", str(out), "--seed", "3"]
        ) == 0
        code = main(
            [
                "attack",
                str(out / "desensitized.jsonl"),
                "--attacks",
                attacks,
                "--out",
                str(out),
                "--seed",
                "3",
            ]
        )
        return code, out

    def test_all_attacks_emit_three_reports(self, tmp_path, corpus_path):
        code, out = self.run_chain(tmp_path, corpus_path)
        assert code == 0
        for name in ("ei", "mti", "pii"):
            assert (out / f"attack_{name}.json").exists()

    def test_explicit_pii_rate_is_zero(self, tmp_path, corpus_path):
        _, out = self.run_chain(tmp_path, corpus_path, attacks="pii")
        report = json.loads((out / "attack_pii.json").read_text())
        assert report["success_rate"] == 0.0

    def test_ei_matches_brute_force_oracle(self, tmp_path, corpus_path):
        _, out = self.run_chain(tmp_path, corpus_path, attacks="ei")
        report = json.loads((out / "attack_ei.json").read_text())

        provider = HashMlmProvider(seed=3)  # same id and seed the CLI resolves
        vocab = sorted(provider.vocabulary)
        matrix = np.stack([provider.embedding(t) for t in vocab])
        hits = {1: 0, 5: 0}
        total = 0
        for record in read_jsonl(out / "desensitized.jsonl"):
            for r in record["replacements"]:
                total += 1
                if r["chosen"] not in provider.vocabulary:
                    continue
                emb = provider.embedding(r["chosen"])
                dists = np.linalg.norm(matrix - emb, axis=1)
                scan = sorted(
                    (float(dists[i]), vocab[i])
                    for i in range(len(vocab))
                    if vocab[i].lower() != r["chosen"].lower()
                )
                ordered = [t for _, t in scan]
                if r["original"].lower() in [t.lower() for t in ordered[:1]]:
                    hits[1] += 1
                if r["original"].lower() in [t.lower() for t in ordered[:5]]:
                    hits[5] += 1
        assert report["positions"] == total
        assert report["topk_accuracy"]["1"] == pytest.approx(hits[1] / total)
        assert report["topk_accuracy"]["5"] == pytest.approx(hits[5] / total)

    def test_empty_results_file_fails(self, tmp_path, capsys):
        empty = tmp_path / "desensitized.jsonl"
        empty.write_text("")
        assert main(["attack", str(empty), "--out", str(tmp_path)]) == 2

    def test_missing_results_file_fails(self, tmp_path):
        assert main(["attack", str(tmp_path / "gone.jsonl"), "--out", str(tmp_path)]) == 2


class TestEvaluateCommand:
    def test_mock_endpoint_scores_deterministically(self, tmp_path, corpus_path):
        out = tmp_path / "out"
        code = main(
            [
                "evaluate",
                "--task",
                "sentiment",
                "--labels",
                str(corpus_path),
                "--endpoint",
                "mock",
                "--out",
                str(out),
                "--seed",
                "3",
            ]
        )
        assert code == 0
        report = json.loads((out / "utility_report.json").read_text())
        assert report["total"] == 3
        assert 0.0 <= report["accuracy"] <= 1.0

        # Re-running produces byte-identical output.
        first = (out / "utility_report.json").read_bytes()
        main(
            [
                "evaluate",
                "--task",
                "sentiment",
                "--labels",
                str(corpus_path),
                "--endpoint",
                "mock",
                "--out",
                str(out),
                "--seed",
                "3",
            ]
        )
        assert (out / "utility_report.json").read_bytes() == first

    def test_evaluates_desensitized_results(self, tmp_path, corpus_path):
        out = tmp_path / "out"
        main(["desensitize", "--input", str(corpus_path), "--out", str(out), "--seed", "3"])
        code = main(
            [
                "evaluate",
                "--task",
                "sentiment",
                "--labels",
                str(corpus_path),
                "--results",
                str(out / "desensitized.jsonl"),
                "--endpoint",
                "mock",
                "--out",
                str(out),
                "--seed",
                "3",
            ]
        )
        assert code == 0


class TestGeneratePortraitsCommand:
    def test_mock_generation(self, tmp_path):
        out = tmp_path / "out"
        code = main(["generate-portraits", "--count", "4", "--out", str(out), "--seed", "9"])
        assert code == 0
        records = read_jsonl(out / "portraits.jsonl")
        assert len(records) == 4
        for record in records:
            attrs = record["attributes"]
            for key in ("age", "gender", "location", "occupation", "disorder"):
                assert attrs[key]
            assert attrs["location"] in record["text"]
            assert record["expert_reviewed"] is False


class TestBenchmarkCommand:
    def test_single_size_row(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["benchmark", "--sizes", "60", "--out", str(out), "--seed", "2"]) == 0
        record = json.loads((out / "benchmark.json").read_text())
        assert len(record["timings"]) == 1
        assert record["timings"][0]["tokens"] == 60

    def test_fit_reported(self, tmp_path):
        out = tmp_path / "out"
        assert main(
            ["benchmark", "--sizes", "40", "80", "160", "--out", str(out), "--seed", "2"]
        ) == 0
        record = json.loads((out / "benchmark.json").read_text())
        assert "r_squared" in record["fit"]
        assert record["seconds_per_100_tokens"] > 0

    def test_sizes_required(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["benchmark", "--out", str(tmp_path)])

    def test_linear_fit_oracle(self):
        # Perfect line recovered exactly.
        fit = linear_fit([1, 2, 3, 4], [2.0, 4.0, 6.0, 8.0])
        assert fit["slope"] == pytest.approx(2.0)
        assert fit["r_squared"] == pytest.approx(1.0)
        noisy = linear_fit([1, 2, 3, 4], [2.1, 3.9, 6.2, 7.8])
        assert 0.9 < noisy["r_squared"] <= 1.0


class TestSeededDeterminism:
    def test_desensitize_twice_is_byte_identical(self, tmp_path, corpus_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["desensitize", "--input", str(corpus_path), "--out", str(out), "--seed", "11"])
            outs.append((out / "desensitized.jsonl").read_bytes())
        assert outs[0] == outs[1]
