"""End-to-end pipeline: detect -> mask -> predict candidates -> filter ->
gradient-select -> sequential fill, with an audit record per prompt."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .candidate_generation import MlmProvider, filter_candidates, predict_candidates
from .core import (
    MaskPlan,
    ObfuscationConfig,
    Replacement,
    TokenizedPrompt,
    detokenize,
    is_content_token,
    tokenize,
)
from .errors import ObfuscationError, PromptVeilError
from .privacy_detection import (
    NerProvider,
    TfidfModel,
    build_mask_plan,
    detect_explicit_spans,
    fit_tfidf,
)
from .surrogate import SurrogateModel, TaskTarget, select_replacement

_STAGES = ("tokenize", "detect", "tfidf", "plan", "target", "predict", "filter", "select", "emit")


@dataclass(frozen=True)
class Providers:
    """The three pluggable models the pipeline depends on."""

    ner: NerProvider
    mlm: MlmProvider
    surrogate: SurrogateModel


@dataclass(frozen=True)
class ObfuscationResult:
    """Desensitized text plus the full audit trail of what was replaced."""

    original_text: str
    desensitized_text: str
    replacements: tuple[Replacement, ...]
    plan: MaskPlan
    timing: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.replacements) != len(self.plan.positions):
            raise ValueError("one replacement per planned position is required")

    def to_record(self, include_timing: bool = False) -> dict:
        record = {
            "original_text": self.original_text,
            "desensitized_text": self.desensitized_text,
            "replacements": [
                {
                    "position": r.position,
                    "original": r.original,
                    "chosen": r.chosen,
                    "gradient_norm": r.gradient_norm if math.isfinite(r.gradient_norm) else None,
                    "candidates_considered": r.candidates_considered,
                    "fallback": r.fallback,
                }
                for r in self.replacements
            ],
            "plan": {
                "positions": list(self.plan.positions),
                "reasons": list(self.plan.reasons),
                "labels": list(self.plan.labels),
                "original_tokens": list(self.plan.original_tokens),
            },
        }
        if include_timing:
            record["timing"] = dict(self.timing)
        return record

    @staticmethod
    def from_record(record: dict) -> "ObfuscationResult":
        plan = MaskPlan(
            positions=tuple(record["plan"]["positions"]),
            reasons=tuple(record["plan"]["reasons"]),
            original_tokens=tuple(record["plan"]["original_tokens"]),
            labels=tuple(record["plan"]["labels"]),
        )
        replacements = tuple(
            Replacement(
                position=r["position"],
                original=r["original"],
                chosen=r["chosen"],
                gradient_norm=math.inf if r["gradient_norm"] is None else r["gradient_norm"],
                candidates_considered=r["candidates_considered"],
                fallback=r.get("fallback"),
            )
            for r in record["replacements"]
        )
        return ObfuscationResult(
            original_text=record["original_text"],
            desensitized_text=record["desensitized_text"],
            replacements=replacements,
            plan=plan,
            timing=dict(record.get("timing", {})),
        )


class _StageClock:
    def __init__(self):
        self.timing = {stage: 0.0 for stage in _STAGES}

    def run(self, stage, fn):
        start = time.perf_counter()
        try:
            return fn()
        except PromptVeilError as exc:
            raise ObfuscationError(stage, str(exc)) from exc
        except Exception as exc:
            raise ObfuscationError(stage, f"{type(exc).__name__}: {exc}") from exc
        finally:
            self.timing[stage] += time.perf_counter() - start


def desensitize(
    text: str,
    config: ObfuscationConfig,
    providers: Providers,
    target: TaskTarget | None = None,
    tfidf: TfidfModel | None = None,
) -> ObfuscationResult:
    """Run the full pipeline on one prompt.

    Positions are filled left to right; each later MLM query sees all earlier
    choices. Without a gold target, the surrogate's own prediction on the
    original text anchors the gradient (keeping the original behavior is the
    whole point). Tokens tagged by the NER provider are banned as candidates
    everywhere in the prompt, so no privacy attribute can resurface at
    another position.
    """
    clock = _StageClock()
    prompt = clock.run("tokenize", lambda: tokenize(text))
    spans = clock.run("detect", lambda: detect_explicit_spans(prompt, providers.ner))
    if tfidf is None:
        tfidf = clock.run("tfidf", lambda: fit_tfidf([prompt]))
    plan = clock.run("plan", lambda: build_mask_plan(prompt, spans, tfidf, config))
    if target is None:
        target = clock.run("target", lambda: providers.surrogate.derive_target(text))

    banned = {
        prompt.tokens[i].lower()
        for span in spans
        for i in range(span.start_token, span.end_token)
        if is_content_token(prompt.tokens[i])
    }

    applied: list[Replacement] = []
    for position, _reason, _original, label in plan.entries():
        cset = clock.run(
            "predict",
            lambda: predict_candidates(
                prompt, applied, position, providers.mlm, config.lambda_, banned=banned
            ),
        )
        fset = clock.run(
            "filter",
            lambda: filter_candidates(
                cset, providers.mlm, config.theta_dist, config.fallback, label
            ),
        )
        replacement = clock.run(
            "select",
            lambda: select_replacement(
                prompt,
                applied,
                position,
                fset,
                providers.surrogate,
                target,
                config.tie_break,
                config.gradient_scope,
            ),
        )
        applied.append(replacement)

    desensitized = clock.run("emit", lambda: detokenize(prompt, applied))
    result = ObfuscationResult(
        original_text=text,
        desensitized_text=desensitized,
        replacements=tuple(applied),
        plan=plan,
        timing=clock.timing,
    )
    if not config.retain_originals:
        result = _redact(result)
    return result


def _redact(result: ObfuscationResult) -> ObfuscationResult:
    """Strip original surface forms for privacy-critical deployments."""
    plan = MaskPlan(
        positions=result.plan.positions,
        reasons=result.plan.reasons,
        original_tokens=tuple("" for _ in result.plan.positions),
        labels=result.plan.labels,
    )
    replacements = tuple(
        Replacement(
            position=r.position,
            original="\x00",  # sentinel; empty would collide with chosen-!= -original checks
            chosen=r.chosen,
            gradient_norm=r.gradient_norm,
            candidates_considered=r.candidates_considered,
            fallback=r.fallback,
        )
        for r in result.replacements
    )
    return ObfuscationResult(
        original_text="",
        desensitized_text=result.desensitized_text,
        replacements=replacements,
        plan=plan,
        timing=result.timing,
    )


@dataclass(frozen=True)
class BatchOutcome:
    """Per-item result of a batch run; exactly one of result/error is set."""

    index: int
    result: ObfuscationResult | None
    error: str | None = None


def desensitize_batch(
    texts: list[str],
    config: ObfuscationConfig,
    providers: Providers,
    targets: list[TaskTarget] | None = None,
    tfidf: TfidfModel | None = None,
) -> list[BatchOutcome]:
    """Desensitize a batch with per-item isolation; one failure never aborts the rest.

    The TF-IDF model defaults to statistics fitted on the batch itself.
    """
    if targets is not None and len(targets) != len(texts):
        raise ValueError(f"{len(targets)} targets for {len(texts)} texts")
    if not texts:
        return []
    if tfidf is None:
        tfidf = fit_tfidf([tokenize(t) for t in texts])

    outcomes = []
    for index, text in enumerate(texts):
        target = targets[index] if targets is not None else None
        try:
            result = desensitize(text, config, providers, target=target, tfidf=tfidf)
            outcomes.append(BatchOutcome(index=index, result=result))
        except ObfuscationError as exc:
            outcomes.append(BatchOutcome(index=index, result=None, error=str(exc)))
    return outcomes
