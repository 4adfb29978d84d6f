"""Word-level tokenization and the value types shared by every pipeline stage.

The whole pipeline operates on word-level tokens with exact character spans
back into the source text, so any stage can splice replacements without
disturbing surrounding whitespace or punctuation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import PositionOutOfRange

# A word keeps internal apostrophes ("I'm" is one token); every other
# non-space character stands alone, so "39-year-old" splits into maskable
# pieces and punctuation never merges with words.
_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")


def is_content_token(token: str) -> bool:
    """True for tokens carrying at least one alphanumeric character."""
    return any(ch.isalnum() for ch in token)


@dataclass(frozen=True)
class TokenizedPrompt:
    """A text with aligned word-level tokens and half-open character spans."""

    text: str
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.spans):
            raise ValueError("tokens and spans must align")
        prev_end = -1
        for token, (start, end) in zip(self.tokens, self.spans):
            if start < 0 or end > len(self.text) or start >= end:
                raise ValueError(f"invalid span ({start}, {end})")
            if start < prev_end:
                raise ValueError("spans must be non-overlapping and increasing")
            if self.text[start:end] != token:
                raise ValueError(f"span ({start}, {end}) does not match token {token!r}")
            prev_end = end

    def __len__(self) -> int:
        return len(self.tokens)

    def content_positions(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if is_content_token(t)]


def tokenize(text: str) -> TokenizedPrompt:
    """Segment ``text`` into word-level tokens with exact character spans."""
    tokens = []
    spans = []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group(0))
        spans.append((m.start(), m.end()))
    return TokenizedPrompt(text=text, tokens=tuple(tokens), spans=tuple(spans))


@dataclass(frozen=True)
class MaskPlan:
    """Ordered token positions to obfuscate, each tagged explicit or implicit.

    ``labels`` carries the entity label for explicit positions (None for
    implicit ones) so downstream fallbacks can pick a fitting placeholder.
    """

    positions: tuple[int, ...]
    reasons: tuple[str, ...]
    original_tokens: tuple[str, ...]
    labels: tuple[str | None, ...] = ()

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels", tuple(None for _ in self.positions))
        if not (len(self.positions) == len(self.reasons) == len(self.original_tokens) == len(self.labels)):
            raise ValueError("plan fields must align")
        if list(self.positions) != sorted(set(self.positions)):
            raise ValueError("positions must be unique and ascending")
        for reason in self.reasons:
            if reason not in ("explicit", "implicit"):
                raise ValueError(f"unknown reason {reason!r}")

    def __len__(self) -> int:
        return len(self.positions)

    def entries(self):
        return zip(self.positions, self.reasons, self.original_tokens, self.labels)


@dataclass(frozen=True)
class Candidate:
    """A replacement proposal: MLM score plus embedding distance to the original.

    ``distance`` is 0.0 until the filtering stage computes it; infinity marks
    candidates whose embedding is unavailable.
    """

    token: str
    mlm_score: float
    distance: float = 0.0

    def __post_init__(self):
        if math.isnan(self.mlm_score) or math.isinf(self.mlm_score):
            raise ValueError("mlm_score must be finite")
        if self.distance < 0 or math.isnan(self.distance):
            raise ValueError("distance must be nonnegative")


@dataclass(frozen=True)
class Replacement:
    """The chosen substitution for one masked position."""

    position: int
    original: str
    chosen: str
    gradient_norm: float
    candidates_considered: int
    fallback: str | None = None

    def __post_init__(self):
        if self.chosen.lower() == self.original.lower():
            raise ValueError(f"chosen token {self.chosen!r} equals the original")
        if math.isnan(self.gradient_norm) or self.gradient_norm < 0:
            raise ValueError("gradient_norm must be nonnegative")


VALID_SURROGATE_KINDS = ("task_specific", "general")
VALID_TIE_BREAKS = ("by_candidate_rank",)
VALID_FALLBACKS = ("max_distance_candidate", "generic_placeholder")
VALID_GRADIENT_SCOPES = ("full_input", "position_only")


@dataclass(frozen=True)
class ObfuscationConfig:
    """Knobs for the desensitization pipeline.

    ``lambda_`` is the candidate count requested per mask, ``k`` the fraction
    of content tokens additionally masked beyond detected entities, and
    ``theta_dist`` the minimum embedding distance a surviving candidate must
    keep from the original word.
    """

    lambda_: int = 10
    k: float = 0.1
    theta_dist: float = 0.95
    desensitization_model_id: str = "hash"
    surrogate_model_id: str = "hash"
    surrogate_kind: str = "task_specific"
    tie_break: str = "by_candidate_rank"
    fallback: str = "max_distance_candidate"
    seed: int = 0
    gradient_scope: str = "full_input"
    retain_originals: bool = True

    def __post_init__(self):
        if self.lambda_ < 1:
            raise ValueError("lambda_ must be >= 1")
        if not 0.0 <= self.k <= 1.0:
            raise ValueError("k must lie in [0, 1]")
        if self.theta_dist <= 0:
            raise ValueError("theta_dist must be positive")
        if self.surrogate_kind not in VALID_SURROGATE_KINDS:
            raise ValueError(f"unknown surrogate_kind {self.surrogate_kind!r}")
        if self.tie_break not in VALID_TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.fallback not in VALID_FALLBACKS:
            raise ValueError(f"unknown fallback {self.fallback!r}")
        if self.gradient_scope not in VALID_GRADIENT_SCOPES:
            raise ValueError(f"unknown gradient_scope {self.gradient_scope!r}")


def splice(prompt: TokenizedPrompt, substitutions: list[tuple[int, str]]) -> str:
    """Replace tokens at the given positions, preserving all other characters."""
    text, _ = splice_with_span(prompt, substitutions, track=None)
    return text


def splice_with_span(
    prompt: TokenizedPrompt,
    substitutions: list[tuple[int, str]],
    track: int | None,
) -> tuple[str, tuple[int, int] | None]:
    """Splice substitutions and report the character span of ``track`` in the result."""
    seen = set()
    for position, _ in substitutions:
        if position < 0 or position >= len(prompt.tokens):
            raise PositionOutOfRange(f"position {position} outside 0..{len(prompt.tokens) - 1}")
        if position in seen:
            raise PositionOutOfRange(f"position {position} substituted twice")
        seen.add(position)

    pieces = []
    cursor = 0
    shift = 0
    tracked_span = None
    for position, new_token in sorted(substitutions):
        start, end = prompt.spans[position]
        pieces.append(prompt.text[cursor:start])
        pieces.append(new_token)
        if track is not None and position == track:
            tracked_span = (start + shift, start + shift + len(new_token))
        shift += len(new_token) - (end - start)
        cursor = end
    pieces.append(prompt.text[cursor:])
    text = "".join(pieces)

    if track is not None and tracked_span is None:
        if track < 0 or track >= len(prompt.tokens):
            raise PositionOutOfRange(f"position {track} outside 0..{len(prompt.tokens) - 1}")
        # Untouched token: its span shifts by every substitution before it.
        start, end = prompt.spans[track]
        shift = 0
        for position, new_token in substitutions:
            s, e = prompt.spans[position]
            if e <= start:
                shift += len(new_token) - (e - s)
        tracked_span = (start + shift, end + shift)
    return text, tracked_span


def detokenize(prompt: TokenizedPrompt, replacements: list[Replacement]) -> str:
    """Rebuild the text with each replacement spliced into its token's span."""
    return splice(prompt, [(r.position, r.chosen) for r in replacements])
