"""Candidate replacement words from a masked-language-model provider, plus the
embedding-distance filter that removes near-synonyms."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace as dc_replace
from typing import Iterable, Protocol, runtime_checkable

import numpy as np

from .core import Candidate, Replacement, TokenizedPrompt, is_content_token, splice
from .errors import OutOfVocabulary, PositionNotMasked, ProviderFailure

# Candidates must survive re-tokenization as a single word token, otherwise
# downstream position arithmetic (sequential filling, mask-token attacks)
# would drift. Subword fragments and punctuation are rejected.
_WORD_CANDIDATE_RE = re.compile(r"\w+(?:['’]\w+)*\Z")


@runtime_checkable
class MlmProvider(Protocol):
    """Contract for fill-mask models used for candidate prediction."""

    model_id: str
    mask_token: str

    @property
    def vocabulary(self) -> frozenset[str]: ...

    def fill_mask(self, context_text: str, mask_marker: str, top_n: int) -> list[tuple[str, float]]:
        """Return the top-n (token, score) pairs for the marked position."""
        ...

    def embedding(self, token: str) -> np.ndarray:
        """Return the word embedding; raises OutOfVocabulary for unknown tokens."""
        ...


@dataclass(frozen=True)
class CandidateSet:
    """Ranked replacement candidates for one masked position."""

    position: int
    original: str
    candidates: tuple[Candidate, ...]
    fallback_used: str | None = None


def is_word_candidate(token: str) -> bool:
    return not token.startswith("##") and bool(_WORD_CANDIDATE_RE.match(token))


def predict_candidates(
    prompt: TokenizedPrompt,
    plan_so_far: list[Replacement],
    position: int,
    provider: MlmProvider,
    lambda_: int,
    banned: Iterable[str] = (),
) -> CandidateSet:
    """Ask the provider for the top-lambda replacements at ``position``.

    Earlier replacements are spliced into the context first (sequential
    filling). The original word, any banned token (other privacy attributes
    of the same prompt), and non-word pieces are dropped and back-filled from
    deeper ranks until lambda candidates are collected or the vocabulary runs
    out.
    """
    if position < 0 or position >= len(prompt.tokens):
        raise PositionNotMasked(f"position {position} outside 0..{len(prompt.tokens) - 1}")
    if any(r.position == position for r in plan_so_far):
        raise PositionNotMasked(f"position {position} was already replaced")
    original = prompt.tokens[position]
    if not is_content_token(original):
        raise PositionNotMasked(f"punctuation token {original!r} at {position} is not maskable")

    excluded = {original.lower()} | {b.lower() for b in banned}
    substitutions = [(r.position, r.chosen) for r in plan_so_far] + [(position, provider.mask_token)]
    context = splice(prompt, substitutions)

    fetch = max(lambda_ + 4, 2 * lambda_)
    previous_depth = -1
    while True:
        try:
            ranked = provider.fill_mask(context, provider.mask_token, fetch)
        except Exception as exc:
            raise ProviderFailure(f"{type(exc).__name__}: {exc}") from exc
        clean = [
            Candidate(token=token, mlm_score=float(score))
            for token, score in ranked
            if is_word_candidate(token) and token.lower() not in excluded
        ]
        # Stop once lambda clean candidates exist or the provider stops
        # yielding deeper ranks (vocabulary exhaustion).
        if len(clean) >= lambda_ or len(ranked) <= previous_depth:
            break
        previous_depth = len(ranked)
        fetch *= 2
    return CandidateSet(position=position, original=original, candidates=tuple(clean[:lambda_]))


def embedding_distance(provider: MlmProvider, a: str, b: str) -> float:
    """Euclidean distance between the provider's word embeddings."""
    for token in (a, b):
        if token not in provider.vocabulary:
            raise OutOfVocabulary(f"token {token!r} not in {provider.model_id} vocabulary")
    va = np.asarray(provider.embedding(a), dtype=float)
    vb = np.asarray(provider.embedding(b), dtype=float)
    return float(np.linalg.norm(va - vb))


_PLACEHOLDERS = {"PERSON": "someone", "LOCATION": "somewhere"}
_PLACEHOLDER_ORDER = ("something", "someone", "somewhere")


def filter_candidates(
    cset: CandidateSet,
    provider: MlmProvider,
    theta_dist: float,
    fallback: str = "max_distance_candidate",
    entity_label: str | None = None,
) -> CandidateSet:
    """Keep candidates whose embedding distance to the original exceeds theta.

    Out-of-vocabulary candidates are retained with distance +infinity. Rank
    order is preserved. An empty survivor set triggers the fallback policy:
    either the single farthest candidate, or a generic placeholder chosen by
    entity label.
    """
    measured = []
    for cand in cset.candidates:
        try:
            dist = embedding_distance(provider, cset.original, cand.token)
        except OutOfVocabulary:
            dist = math.inf
        measured.append(dc_replace(cand, distance=dist))

    kept = tuple(c for c in measured if c.distance > theta_dist)
    if kept:
        return CandidateSet(cset.position, cset.original, kept, fallback_used=None)

    if fallback == "max_distance_candidate" and measured:
        farthest = max(measured, key=lambda c: c.distance)
        return CandidateSet(
            cset.position, cset.original, (farthest,), fallback_used="max_distance_candidate"
        )

    # generic_placeholder, or an exhausted candidate list with nothing to keep.
    preferred = _PLACEHOLDERS.get(entity_label or "", "something")
    for token in (preferred, *_PLACEHOLDER_ORDER):
        if token.lower() != cset.original.lower():
            placeholder = token
            break
    try:
        dist = embedding_distance(provider, cset.original, placeholder)
    except OutOfVocabulary:
        dist = math.inf
    return CandidateSet(
        cset.position,
        cset.original,
        (Candidate(token=placeholder, mlm_score=0.0, distance=dist),),
        fallback_used="generic_placeholder",
    )
