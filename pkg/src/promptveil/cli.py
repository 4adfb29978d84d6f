"""Command-line surface: desensitize, attack, evaluate, generate-portraits,
and benchmark, all driven by a validated run configuration."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .attacks import ei_attack, mti_attack, pii_inference_attack
from .core import ObfuscationConfig
from .datasets import load_corpus, sample_profile, save_corpus, generate_portrait
from .errors import ConfigError, PromptVeilError
from .evaluation import (
    DEFAULT_TEMPLATES,
    TASK_LABEL_SETS,
    CallableChatClient,
    ChatClient,
    judge_quality,
)
from .evaluation import run_task as evaluation_run_task
from .obfuscator import ObfuscationResult, Providers, desensitize, desensitize_batch
from .providers import resolve_mlm, resolve_ner, resolve_surrogate
from .providers.stubs import hash_unit
from .synth import make_benchmark_prompt


@dataclass
class RunConfig:
    """Validated configuration for every subcommand; unknown keys are rejected."""

    lambda_: int = 10
    k: float = 0.1
    theta_dist: float = 0.95
    seed: int = 0
    desensitization_model_id: str = "hash"
    surrogate_model_id: str = "hash"
    surrogate_kind: str = "task_specific"
    tie_break: str = "by_candidate_rank"
    fallback: str = "max_distance_candidate"
    gradient_scope: str = "full_input"
    retain_originals: bool = True
    ner_provider: str = "lexicon"
    attacker_model_id: str = ""  # defaults to the desensitization model
    k_values: tuple[int, ...] = (1, 5)
    attacks: tuple[str, ...] = ("ei", "mti", "pii")
    out_dir: str = "out"
    emit_timing: bool = False
    chat_base_url: str = ""
    chat_model: str = "gpt-4o-mini"
    api_key_env: str = "CHAT_API_KEY"

    _KEY_ALIASES = {"lambda": "lambda_"}

    @classmethod
    def from_file(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        values = {}
        for key, value in raw.items():
            name = cls._KEY_ALIASES.get(key, key)
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if name in ("k_values", "attacks"):
                value = tuple(value)
            values[name] = value
        return cls(**values)

    def obfuscation(self) -> ObfuscationConfig:
        return ObfuscationConfig(
            lambda_=self.lambda_,
            k=self.k,
            theta_dist=self.theta_dist,
            desensitization_model_id=self.desensitization_model_id,
            surrogate_model_id=self.surrogate_model_id,
            surrogate_kind=self.surrogate_kind,
            tie_break=self.tie_break,
            fallback=self.fallback,
            seed=self.seed,
            gradient_scope=self.gradient_scope,
            retain_originals=self.retain_originals,
        )

    def providers(self) -> Providers:
        return Providers(
            ner=resolve_ner(self.ner_provider),
            mlm=resolve_mlm(self.desensitization_model_id, seed=self.seed),
            surrogate=resolve_surrogate(
                self.surrogate_model_id, kind=self.surrogate_kind, seed=self.seed
            ),
        )


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    for flag, name in (
        ("k", "k"),
        ("lambda_", "lambda_"),
        ("theta_dist", "theta_dist"),
        ("seed", "seed"),
        ("out", "out_dir"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "attacks", None):
        config.attacks = tuple(args.attacks.split(","))
    if getattr(args, "emit_timing", False):
        config.emit_timing = True
    return config


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _read_results(path: Path) -> list[ObfuscationResult]:
    results = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if "error" in record:
                continue
            results.append(ObfuscationResult.from_record(record))
    return results


def _mock_client(task: str, seed: int) -> CallableChatClient:
    """Deterministic offline chat endpoint; responses hash off the user prompt."""

    def respond(system_prompt: str, user_prompt: str) -> str:
        if task == "quality_judge":
            scores = [
                1 + int(hash_unit(f"{seed}|judge|{dim}|{user_prompt}") * 5)
                for dim in ("c", "r", "co", "re", "o")
            ]
            scores = [min(s, 5) for s in scores]
            return (
                f"Correctness: {scores[0]}, Relevance: {scores[1]}, "
                f"Completeness: {scores[2]}, Readability: {scores[3]}. "
                f"Overall Score: {scores[4]}"
            )
        if task == "portrait_generation":
            return user_prompt
        labels = TASK_LABEL_SETS.get(task)
        if labels:
            index = int(hash_unit(f"{seed}|label|{user_prompt}") * len(labels))
            return labels[min(index, len(labels) - 1)]
        return f"Diagnosis: condition-{int(hash_unit(f'{seed}|qa|{user_prompt}') * 1000):03d}"

    return CallableChatClient(responder=respond, model=f"mock-{task}")


def _chat_client(config: RunConfig, endpoint: str, task: str) -> ChatClient | CallableChatClient:
    if endpoint == "mock":
        return _mock_client(task, config.seed)
    base_url = endpoint or config.chat_base_url
    if not base_url:
        raise ConfigError("no chat endpoint configured; pass --endpoint or set chat_base_url")
    return ChatClient(base_url=base_url, model=config.chat_model, api_key_env=config.api_key_env)


def cmd_desensitize(args: argparse.Namespace) -> int:
    config = _apply_overrides(RunConfig.from_file(args.config), args)
    if args.text is None and args.input is None:
        print("error: provide --text or --input", file=sys.stderr)
        return 2
    if args.input is not None:
        path = Path(args.input)
        if not path.exists():
            print(f"error: input file not found: {path}", file=sys.stderr)
            return 2
        texts = [ex.text for ex in load_corpus(path, format=args.format)]
    else:
        texts = [args.text]

    providers = config.providers()
    outcomes = desensitize_batch(texts, config.obfuscation(), providers)
    records = []
    failures = 0
    for outcome in outcomes:
        if outcome.result is not None:
            records.append(outcome.result.to_record(include_timing=config.emit_timing))
        else:
            failures += 1
            records.append({"index": outcome.index, "error": outcome.error})
    out = _out_dir(config) / "desensitized.jsonl"
    _write_jsonl(out, records)
    print(f"desensitized {len(texts) - failures}/{len(texts)} prompts -> {out}")
    if failures:
        print(f"{failures} prompts failed; records carry the stage errors")
    return 1 if (failures and args.strict) else 0


def cmd_attack(args: argparse.Namespace) -> int:
    config = _apply_overrides(RunConfig.from_file(args.config), args)
    path = Path(args.results)
    if not path.exists():
        print(f"error: results file not found: {path}", file=sys.stderr)
        return 2
    results = _read_results(path)
    if not results:
        print(f"error: no usable results in {path}", file=sys.stderr)
        return 2

    k_values = sorted(set(config.k_values))
    out_dir = _out_dir(config)
    rows = []
    for name in config.attacks:
        if name == "ei":
            provider = resolve_mlm(config.desensitization_model_id, seed=config.seed)
            report = ei_attack(results, provider, k_values)
        elif name == "mti":
            attacker_id = config.attacker_model_id or config.desensitization_model_id
            attacker = resolve_mlm(attacker_id, seed=config.seed)
            report = mti_attack(results, attacker, k_values)
        elif name == "pii":
            report = pii_inference_attack(results, resolve_ner(config.ner_provider), "explicit")
        else:
            print(f"error: unknown attack {name!r}", file=sys.stderr)
            return 2
        record = report.to_record()
        (out_dir / f"attack_{name}.json").write_text(
            json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        topk = " ".join(
            f"top{k}={v:.3f}" for k, v in sorted(report.topk_accuracy.items())
        ) or "-"
        rate = f"{report.success_rate:.3f}" if report.success_rate is not None else "-"
        rows.append((name, report.positions, topk, rate))

    print(f"{'attack':<8}{'positions':<11}{'topk':<28}{'success_rate'}")
    for name, positions, topk, rate in rows:
        print(f"{name:<8}{positions:<11}{topk:<28}{rate}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _apply_overrides(RunConfig.from_file(args.config), args)
    template = DEFAULT_TEMPLATES[args.task]
    corpus_path = Path(args.labels)
    if not corpus_path.exists():
        print(f"error: labels file not found: {corpus_path}", file=sys.stderr)
        return 2
    examples = load_corpus(corpus_path, format=args.format)
    labels = [ex.label for ex in examples]

    if args.results:
        results_path = Path(args.results)
        if not results_path.exists():
            print(f"error: results file not found: {results_path}", file=sys.stderr)
            return 2
        prompts = [r.desensitized_text for r in _read_results(results_path)]
        if len(prompts) != len(labels):
            print(
                f"error: {len(prompts)} results vs {len(labels)} labels", file=sys.stderr
            )
            return 2
    else:
        prompts = [ex.text for ex in examples]

    client = _chat_client(config, args.endpoint, args.task)
    report = evaluation_run_task(prompts, labels, template, client)

    if args.judge and args.task == "qa":
        judge_client = _chat_client(config, args.endpoint, "quality_judge")
        judge_template = DEFAULT_TEMPLATES["quality_judge"]
        scores = []
        for entry in report.transcripts:
            if "response" not in entry:
                continue
            judgment = judge_quality(
                entry["prompt"], entry["response"], judge_template, judge_client
            )
            scores.append(judgment.overall)
        report.quality_scores = scores
        report.quality_mean = sum(scores) / len(scores) if scores else None

    out = _out_dir(config) / "utility_report.json"
    out.write_text(
        json.dumps(report.to_record(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    print(f"task={report.task} accuracy={report.accuracy:.3f} ({report.correct}/{report.evaluated}) -> {out}")
    return 0


def cmd_generate_portraits(args: argparse.Namespace) -> int:
    config = _apply_overrides(RunConfig.from_file(args.config), args)
    client = _chat_client(config, args.endpoint, "portrait_generation")
    template = DEFAULT_TEMPLATES["portrait_generation"]
    examples = []
    for i in range(args.count):
        profile = sample_profile(config.seed * 100003 + i)
        examples.append(generate_portrait(profile, client, template))
    out = _out_dir(config) / "portraits.jsonl"
    save_corpus(examples, out)
    print(f"wrote {len(examples)} portraits -> {out}")
    return 0


def linear_fit(sizes: list[int], seconds: list[float]) -> dict[str, float]:
    """Least-squares line through (tokens, seconds) with its R^2."""
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(seconds, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    total = float(np.sum((y - y.mean()) ** 2))
    residual = float(np.sum((y - predicted) ** 2))
    r_squared = 1.0 if total == 0 else 1.0 - residual / total
    return {"slope": float(slope), "intercept": float(intercept), "r_squared": r_squared}


def cmd_benchmark(args: argparse.Namespace) -> int:
    config = _apply_overrides(RunConfig.from_file(args.config), args)
    sizes = args.sizes
    if any(s <= 0 for s in sizes):
        print("error: sizes must be positive token counts", file=sys.stderr)
        return 2
    providers = config.providers()
    obfuscation = config.obfuscation()

    timings = []
    for size in sizes:
        prompt = make_benchmark_prompt(size, seed=config.seed)
        start = time.perf_counter()
        desensitize(prompt, obfuscation, providers)
        timings.append((size, time.perf_counter() - start))

    fit = linear_fit([t for t, _ in timings], [s for _, s in timings])
    record = {
        "sizes": sizes,
        "timings": [{"tokens": t, "seconds": s} for t, s in timings],
        "fit": fit,
        "seconds_per_100_tokens": fit["slope"] * 100,
    }
    out = _out_dir(config) / "benchmark.json"
    out.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    for tokens, seconds in timings:
        print(f"{tokens:>6} tokens  {seconds:8.3f} s")
    print(f"linear fit: {fit['slope'] * 100:.3f} s / 100 tokens, R^2 = {fit['r_squared']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptveil",
        description="Desensitize LLM prompts and measure the privacy/utility trade-off.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="path to a JSON run config")
        p.add_argument("--k", type=float, default=None)
        p.add_argument("--lambda", dest="lambda_", type=int, default=None)
        p.add_argument("--theta-dist", dest="theta_dist", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("desensitize", help="rewrite privacy-sensitive words in prompts")
    common(p)
    p.add_argument("--text", default=None, help="a single prompt")
    p.add_argument("--input", default=None, help="corpus file")
    p.add_argument("--format", default="jsonl", choices=["jsonl", "csv", "tsv"])
    p.add_argument("--strict", action="store_true", help="nonzero exit if any item failed")
    p.add_argument("--emit-timing", action="store_true", help="include per-stage timings in records")
    p.set_defaults(func=cmd_desensitize)

    p = sub.add_parser("attack", help="run the adversary harness over saved results")
    common(p)
    p.add_argument("results", help="desensitized.jsonl from the desensitize command")
    p.add_argument("--attacks", default=None, help="comma list: ei,mti,pii")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="measure task utility against a chat endpoint")
    common(p)
    p.add_argument("--task", required=True, choices=["sentiment", "topic", "qa"])
    p.add_argument("--labels", required=True, help="corpus file with gold labels")
    p.add_argument("--results", default=None, help="evaluate these desensitized results")
    p.add_argument("--format", default="jsonl", choices=["jsonl", "csv", "tsv"])
    p.add_argument("--endpoint", default="", help="chat completion URL, or 'mock'")
    p.add_argument("--judge", action="store_true", help="also score QA answer quality")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate-portraits", help="synthesize labeled portrait narratives")
    common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--endpoint", default="mock", help="chat completion URL, or 'mock'")
    p.set_defaults(func=cmd_generate_portraits)

    p = sub.add_parser("benchmark", help="time the pipeline across prompt sizes")
    common(p)
    p.add_argument("--sizes", type=int, nargs="+", required=True)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PromptVeilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
