"""Adversary harness: embedding inference, mask token inference, PII
inference, and the TopK-accuracy / success-rate metrics."""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .candidate_generation import MlmProvider
from .core import TokenizedPrompt, is_content_token, splice, tokenize
from .errors import EmptyResults, JudgeFailure, ProviderFailure
from .obfuscator import ObfuscationResult
from .privacy_detection import NerProvider


@dataclass(frozen=True)
class AttackReport:
    """Metric bundle for one attack over one result set."""

    attack: str
    topk_accuracy: dict[int, float]
    success_rate: float | None
    positions: int
    examples: int
    per_example: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "attack": self.attack,
            "positions": self.positions,
            "examples": self.examples,
            "topk_accuracy": {str(k): v for k, v in sorted(self.topk_accuracy.items())},
            "success_rate": self.success_rate,
            "flags": list(self.flags),
            "per_example": list(self.per_example),
        }


def topk_accuracy(hit_ranks: list[int | None], k_values: list[int]) -> dict[int, float]:
    """Fraction of positions whose true word sits within the top k guesses.

    ``hit_ranks`` holds the 1-based rank of the original per position (None
    for a miss), which makes the output monotone in k by construction.
    """
    if not hit_ranks:
        return {k: 0.0 for k in k_values}
    return {
        k: sum(1 for r in hit_ranks if r is not None and r <= k) / len(hit_ranks)
        for k in k_values
    }


def _rank_of(ranked_tokens: list[str], original: str) -> int | None:
    needle = original.lower()
    for i, token in enumerate(ranked_tokens):
        if token.lower() == needle:
            return i + 1
    return None


def ei_attack(
    results: list[ObfuscationResult],
    provider: MlmProvider,
    k_values: list[int],
) -> AttackReport:
    """Recover originals by nearest-neighbor search around each replacement.

    For every replaced position the attacker ranks the provider vocabulary by
    Euclidean distance to the replacement's embedding (the replacement itself
    excluded; distance ties break on the token string) and checks whether the
    original word appears among the top k. Replacements outside the
    vocabulary count as misses.
    """
    if not results:
        raise EmptyResults("ei_attack needs at least one result")
    max_k = max(k_values)
    vocab = sorted(provider.vocabulary)
    matrix = np.stack([np.asarray(provider.embedding(t), dtype=float) for t in vocab])

    flags: list[str] = []
    ranks: list[int | None] = []
    per_example = []
    for index, result in enumerate(results):
        for r in result.replacements:
            if r.chosen not in provider.vocabulary:
                ranks.append(None)
                per_example.append(
                    {"example": index, "position": r.position, "rank": None, "oov": True}
                )
                continue
            emb = np.asarray(provider.embedding(r.chosen), dtype=float)
            dists = np.linalg.norm(matrix - emb, axis=1)
            order = sorted(
                (i for i in range(len(vocab)) if vocab[i].lower() != r.chosen.lower()),
                key=lambda i: (dists[i], vocab[i]),
            )
            nearest = [vocab[i] for i in order[:max_k]]
            ranks.append(_rank_of(nearest, r.original))
            per_example.append(
                {"example": index, "position": r.position, "rank": ranks[-1], "oov": False}
            )
    if not ranks:
        flags.append("no_replaced_positions")
    return AttackReport(
        attack="ei",
        topk_accuracy=topk_accuracy(ranks, k_values),
        success_rate=None,
        positions=len(ranks),
        examples=len(results),
        per_example=per_example,
        flags=flags,
    )


def mti_attack(
    results: list[ObfuscationResult],
    mlm_attacker: MlmProvider,
    k_values: list[int],
) -> AttackReport:
    """Mask each replaced position in the desensitized text and let an
    attacker MLM guess; a hit means the original word is among its top k."""
    if not results:
        raise EmptyResults("mti_attack needs at least one result")
    max_k = max(k_values)

    flags: list[str] = []
    ranks: list[int | None] = []
    per_example = []
    for index, result in enumerate(results):
        dprompt = tokenize(result.desensitized_text)
        for r in result.replacements:
            if r.position >= len(dprompt.tokens):
                flags.append(f"example {index}: position {r.position} lost in re-tokenization")
                continue
            context = splice(dprompt, [(r.position, mlm_attacker.mask_token)])
            try:
                predictions = mlm_attacker.fill_mask(context, mlm_attacker.mask_token, max_k)
            except Exception as exc:
                raise ProviderFailure(f"{type(exc).__name__}: {exc}") from exc
            rank = _rank_of([t for t, _ in predictions], r.original)
            ranks.append(rank)
            per_example.append({"example": index, "position": r.position, "rank": rank})
    if not ranks:
        flags.append("no_replaced_positions")
    return AttackReport(
        attack="mti",
        topk_accuracy=topk_accuracy(ranks, k_values),
        success_rate=None,
        positions=len(ranks),
        examples=len(results),
        per_example=per_example,
        flags=flags,
    )


@runtime_checkable
class LlmJudge(Protocol):
    """An adversary that deduces a named attribute from raw text."""

    def infer(self, text: str, attribute: str) -> str: ...


_NORMALIZE_RE = re.compile(r"[^\w\s]")


def normalize_attribute(value: str) -> str:
    """Lowercase, strip punctuation, and collapse whitespace for matching."""
    return " ".join(_NORMALIZE_RE.sub(" ", value.lower()).split())


def _entity_token_sequences(text: str, ner: NerProvider) -> list[list[str]]:
    prompt = tokenize(text)
    sequences = []
    for start_char, end_char, _label in ner.analyze(text):
        seq = [
            t.lower()
            for t, (s, e) in zip(prompt.tokens, prompt.spans)
            if s < end_char and e > start_char and is_content_token(t)
        ]
        if seq:
            sequences.append(seq)
    return sequences


def _contains_sequence(haystack: list[str], needle: list[str]) -> bool:
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def pii_inference_attack(
    results: list[ObfuscationResult],
    extractor: NerProvider | LlmJudge,
    attribute: str = "explicit",
    labels: list[str] | None = None,
) -> AttackReport:
    """Deduce protected attributes from desensitized text.

    Explicit mode re-runs NER on the original text and scores a success when
    any tagged entity's word sequence survives verbatim (case-insensitive) in
    the desensitized text. Implicit mode asks an LLM judge to infer the named
    attribute and compares against the per-example label after normalization.
    Judge failures are excluded from the denominator and flagged.
    """
    if not results:
        raise EmptyResults("pii_inference_attack needs at least one result")

    flags: list[str] = []
    per_example = []
    successes = 0
    evaluated = 0

    if attribute == "explicit":
        if not isinstance(extractor, NerProvider):
            raise TypeError("explicit mode requires a NerProvider extractor")
        for index, result in enumerate(results):
            if not result.original_text:
                flags.append(f"example {index}: original text unavailable")
                continue
            desens_tokens = [t.lower() for t in tokenize(result.desensitized_text).tokens]
            leaked = any(
                _contains_sequence(desens_tokens, seq)
                for seq in _entity_token_sequences(result.original_text, extractor)
            )
            evaluated += 1
            successes += int(leaked)
            per_example.append({"example": index, "leaked": leaked})
    else:
        if labels is None or len(labels) != len(results):
            raise ValueError("implicit mode needs one ground-truth label per result")
        if not isinstance(extractor, LlmJudge):
            raise TypeError("implicit mode requires an LlmJudge extractor")
        for index, (result, label) in enumerate(zip(results, labels)):
            try:
                guess = extractor.infer(result.desensitized_text, attribute)
            except Exception as exc:
                flags.append(f"example {index}: judge failure ({exc})")
                per_example.append({"example": index, "error": str(exc)})
                continue
            hit = normalize_attribute(guess) == normalize_attribute(label)
            evaluated += 1
            successes += int(hit)
            per_example.append({"example": index, "guess": guess, "hit": hit})

    if evaluated == 0:
        flags.append("no_examples_evaluated")
    rate = successes / evaluated if evaluated else 0.0
    return AttackReport(
        attack="pii",
        topk_accuracy={},
        success_rate=rate,
        positions=evaluated,
        examples=len(results),
        per_example=per_example,
        flags=flags,
    )


def random_perturbation_baseline(
    text: str,
    ratio: float,
    seed: int,
    vocabulary: list[str],
) -> str:
    """Replace a random fraction of content tokens with random vocabulary words.

    Deterministic under ``seed``; the comparison baseline for the targeted
    pipeline.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    if not vocabulary:
        raise ValueError("vocabulary must be non-empty")
    prompt = tokenize(text)
    content = prompt.content_positions()
    count = math.ceil(ratio * len(content) - 1e-9) if ratio > 0 else 0
    if count == 0:
        return text
    rng = random.Random(seed)
    chosen_positions = sorted(rng.sample(content, min(count, len(content))))
    substitutions = []
    for position in chosen_positions:
        original = prompt.tokens[position].lower()
        options = [w for w in vocabulary if w.lower() != original] or list(vocabulary)
        substitutions.append((position, rng.choice(options)))
    return splice(prompt, substitutions)
