"""Mask planning: explicit PII spans from a pluggable NER provider, implicit
risk words from TF-IDF rarity scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .core import MaskPlan, ObfuscationConfig, TokenizedPrompt, is_content_token
from .errors import EmptyCorpus, NerProviderFailure, PositionOutOfRange


@runtime_checkable
class NerProvider(Protocol):
    """Contract for sequence taggers: character spans with entity labels."""

    def analyze(self, text: str) -> list[tuple[int, int, str]]:
        """Return (start_char, end_char, label) triples for detected entities."""
        ...


@dataclass(frozen=True)
class EntitySpan:
    """A detected entity as a half-open token index range."""

    start_token: int
    end_token: int
    label: str

    def __post_init__(self):
        if self.start_token >= self.end_token:
            raise ValueError("start_token must precede end_token")

    def width(self) -> int:
        return self.end_token - self.start_token


def detect_explicit_spans(prompt: TokenizedPrompt, ner: NerProvider) -> list[EntitySpan]:
    """Map the provider's character spans onto token ranges.

    Overlapping spans are merged into one range; the widest contributing span
    donates the label. Returned spans are sorted and non-overlapping.
    """
    try:
        raw = ner.analyze(prompt.text)
    except Exception as exc:
        raise NerProviderFailure(f"{type(exc).__name__}: {exc}") from exc

    token_spans = []
    for start_char, end_char, label in raw:
        covered = [
            i
            for i, (s, e) in enumerate(prompt.spans)
            if s < end_char and e > start_char
        ]
        if covered:
            token_spans.append(EntitySpan(covered[0], covered[-1] + 1, label))

    token_spans.sort(key=lambda s: (s.start_token, s.end_token))
    merged: list[EntitySpan] = []
    for span in token_spans:
        if merged and span.start_token < merged[-1].end_token:
            prev = merged[-1]
            winner = max((prev, span), key=lambda s: (s.width(), -s.start_token))
            merged[-1] = EntitySpan(
                min(prev.start_token, span.start_token),
                max(prev.end_token, span.end_token),
                winner.label,
            )
        else:
            merged.append(span)
    return merged


@dataclass(frozen=True)
class TfidfModel:
    """Document frequencies over a corpus of tokenized prompts."""

    document_frequency: dict[str, int]
    corpus_size: int

    def __post_init__(self):
        if self.corpus_size < 1:
            raise ValueError("corpus_size must be >= 1")
        for token, count in self.document_frequency.items():
            if count > self.corpus_size:
                raise ValueError(f"df({token!r}) exceeds corpus size")

    def df(self, token: str) -> int:
        return self.document_frequency.get(token.lower(), 0)


def fit_tfidf(corpus: list[TokenizedPrompt]) -> TfidfModel:
    """Count, per lowercased token, how many documents contain it."""
    if not corpus:
        raise EmptyCorpus("TF-IDF needs a non-empty corpus")
    df: dict[str, int] = {}
    for prompt in corpus:
        for token in {t.lower() for t in prompt.tokens}:
            df[token] = df.get(token, 0) + 1
    return TfidfModel(document_frequency=df, corpus_size=len(corpus))


def tfidf_score(model: TfidfModel, prompt: TokenizedPrompt, position: int) -> float:
    """tf(token in prompt) * smoothed idf; higher scores mean rarer words.

    tf is the raw in-prompt count over the prompt length; idf is
    ln((1 + N) / (1 + df)) + 1, so unseen tokens stay finite.
    """
    if position < 0 or position >= len(prompt.tokens):
        raise PositionOutOfRange(f"position {position} outside 0..{len(prompt.tokens) - 1}")
    token = prompt.tokens[position].lower()
    count = sum(1 for t in prompt.tokens if t.lower() == token)
    tf = count / len(prompt.tokens)
    idf = math.log((1 + model.corpus_size) / (1 + model.df(token))) + 1.0
    return tf * idf


def mask_budget(k: float, content_count: int) -> int:
    """ceil(k * m), guarded against float noise so 0.3 * 10 stays 3."""
    return math.ceil(k * content_count - 1e-9) if k > 0 else 0


def build_mask_plan(
    prompt: TokenizedPrompt,
    spans: list[EntitySpan],
    model: TfidfModel,
    config: ObfuscationConfig,
) -> MaskPlan:
    """Combine unconditional entity masking with the top-k TF-IDF rare words.

    Every content token inside a detected entity span is masked (explicit).
    Beyond those, the ceil(k * m) highest-scoring content tokens are added
    (implicit), m being the prompt's content-token count. Punctuation is
    never maskable. TF-IDF ties break toward the lower token index.
    """
    explicit: dict[int, str] = {}
    for span in spans:
        if span.end_token > len(prompt.tokens):
            raise PositionOutOfRange(
                f"span end {span.end_token} outside prompt of {len(prompt.tokens)} tokens"
            )
        for i in range(span.start_token, span.end_token):
            if is_content_token(prompt.tokens[i]):
                explicit.setdefault(i, span.label)

    content = prompt.content_positions()
    budget = min(mask_budget(config.k, len(content)), len(content) - len(explicit))
    implicit: list[int] = []
    if budget > 0:
        pool = [i for i in content if i not in explicit]
        pool.sort(key=lambda i: (-tfidf_score(model, prompt, i), i))
        implicit = sorted(pool[:budget])

    entries = sorted(
        [(i, "explicit", explicit[i]) for i in explicit]
        + [(i, "implicit", None) for i in implicit]
    )
    return MaskPlan(
        positions=tuple(i for i, _, _ in entries),
        reasons=tuple(reason for _, reason, _ in entries),
        original_tokens=tuple(prompt.tokens[i] for i, _, _ in entries),
        labels=tuple(label for _, _, label in entries),
    )
