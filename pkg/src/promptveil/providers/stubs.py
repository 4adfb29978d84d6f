"""Deterministic offline providers.

Everything here derives its behavior from SHA-256 of its inputs, never from
Python's salted ``hash`` or global RNG state, so seeded runs are byte-stable
across processes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .. import synth
from ..core import is_content_token, tokenize
from ..datasets import DEFAULT_LOCATIONS, DEFAULT_OCCUPATIONS
from ..errors import OutOfVocabulary
from ..surrogate import TaskTarget

MASK_TOKEN = "MASKTOK"  # survives word tokenization as a single token


def hash_floats(key: str, count: int) -> np.ndarray:
    """``count`` floats in [-1, 1), derived from SHA-256 in counter mode."""
    out = np.empty(count, dtype=np.float64)
    filled = 0
    counter = 0
    while filled < count:
        digest = hashlib.sha256(f"{key}#{counter}".encode("utf-8")).digest()
        for offset in range(0, 32, 8):
            if filled >= count:
                break
            (value,) = struct.unpack_from("<Q", digest, offset)
            out[filled] = value / 2**63 - 1.0
            filled += 1
        counter += 1
    return out


def hash_unit(key: str) -> float:
    """One float in [0, 1)."""
    return float(hash_floats(key, 1)[0] + 1.0) / 2.0


_SYLLABLES = [
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu",
    "na", "pe", "qi", "ro", "su", "ta", "ve", "wi", "xo", "yu",
]


def pseudoword_vocabulary(size: int) -> list[str]:
    """Synthetic two/three-syllable words, disjoint from real entity names."""
    words = []
    for first in _SYLLABLES:
        for second in _SYLLABLES:
            words.append(first + second)
            if len(words) >= size:
                return words
    for first in _SYLLABLES:
        for second in _SYLLABLES:
            for third in _SYLLABLES:
                words.append(first + second + third)
                if len(words) >= size:
                    return words
    raise ValueError(f"cannot build {size} pseudowords")


class HashMlmProvider:
    """Fill-mask stub over a synthetic vocabulary.

    Rankings are a pseudo-random function of the full context string, so
    sequential filling genuinely changes later predictions, and embeddings
    are pseudo-random points whose pairwise distances comfortably exceed the
    default 0.95 threshold.
    """

    def __init__(self, vocab_size: int = 256, dim: int = 16, seed: int = 0, model_id: str | None = None):
        self.model_id = model_id or f"hash-mlm-{vocab_size}x{dim}-s{seed}"
        self.mask_token = MASK_TOKEN
        self.seed = seed
        self.dim = dim
        self._vocab = pseudoword_vocabulary(vocab_size)
        self._vocab_set = frozenset(self._vocab)

    @property
    def vocabulary(self) -> frozenset[str]:
        return self._vocab_set

    def fill_mask(self, context_text: str, mask_marker: str, top_n: int) -> list[tuple[str, float]]:
        scored = [
            (token, hash_unit(f"{self.seed}|rank|{context_text}|{token}"))
            for token in self._vocab
        ]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:top_n]

    def embedding(self, token: str) -> np.ndarray:
        if token not in self._vocab_set:
            raise OutOfVocabulary(f"{token!r} not in {self.model_id} vocabulary")
        return hash_floats(f"{self.seed}|emb|{token}", self.dim)


@dataclass
class StubNerProvider:
    """Returns the same spans for every text; unit-test fixture."""

    spans: list[tuple[int, int, str]] = field(default_factory=list)

    def analyze(self, text: str) -> list[tuple[int, int, str]]:
        return list(self.spans)


class NullNerProvider:
    def analyze(self, text: str) -> list[tuple[int, int, str]]:
        return []


_DEFAULT_PERSONS = list(synth.PEOPLE) + ["Bob", "Carol", "David", "Emma", "Frank"]
_DEFAULT_ORGS = list(synth.COMPANIES)
_DEFAULT_PLACES = sorted(set(DEFAULT_LOCATIONS) | set(synth.CITIES)) + [
    "Canada", "England", "Australia", "Ireland", "Scotland", "New York",
]


class LexiconNerProvider:
    """Small real NER: gazetteer lookup plus bare numbers tagged DATE.

    Scans word n-grams (up to three tokens) against the configured name
    lists; the longest match wins. Any purely numeric token is tagged DATE,
    which covers ages and years.
    """

    def __init__(
        self,
        locations: list[str] | None = None,
        persons: list[str] | None = None,
        organizations: list[str] | None = None,
    ):
        self._entries: dict[str, str] = {}
        for label, names in (
            ("LOCATION", locations if locations is not None else _DEFAULT_PLACES),
            ("PERSON", persons if persons is not None else _DEFAULT_PERSONS),
            ("ORGANIZATION", organizations if organizations is not None else _DEFAULT_ORGS),
        ):
            for name in names:
                self._entries[" ".join(name.lower().split())] = label
        self._max_words = max((len(k.split()) for k in self._entries), default=1)

    def analyze(self, text: str) -> list[tuple[int, int, str]]:
        prompt = tokenize(text)
        tokens = [t.lower() for t in prompt.tokens]
        spans: list[tuple[int, int, str]] = []
        i = 0
        while i < len(tokens):
            if not is_content_token(prompt.tokens[i]):
                i += 1
                continue
            matched = False
            for width in range(min(self._max_words, len(tokens) - i), 0, -1):
                window = tokens[i : i + width]
                if not all(is_content_token(w) for w in window):
                    continue
                label = self._entries.get(" ".join(window))
                if label is not None:
                    spans.append((prompt.spans[i][0], prompt.spans[i + width - 1][1], label))
                    i += width
                    matched = True
                    break
            if matched:
                continue
            if prompt.tokens[i].isdigit():
                spans.append((prompt.spans[i][0], prompt.spans[i][1], "DATE"))
            i += 1
        return spans


class HashSurrogate:
    """Gradient stub: norms are a pseudo-random function of the exact text.

    Distinct candidate splices therefore get distinct, reproducible scores,
    which is all the selection logic needs.
    """

    def __init__(
        self,
        kind: str = "task_specific",
        labels: tuple[str, ...] = ("alpha", "beta"),
        dim: int = 8,
        seed: int = 0,
        model_id: str | None = None,
    ):
        self.model_id = model_id or f"hash-surrogate-{kind}-s{seed}"
        self.kind = kind
        self.labels = labels
        self.dim = dim
        self.seed = seed

    def _key(self, prompt_text: str, target: TaskTarget) -> str:
        return f"{self.seed}|{prompt_text}|{target.kind}|{target.value}"

    def loss(self, prompt_text: str, target: TaskTarget) -> float:
        return hash_unit(f"{self._key(prompt_text, target)}|loss") * 4.0

    def input_gradient(self, prompt_text: str, target: TaskTarget) -> np.ndarray:
        count = max(len(tokenize(prompt_text).tokens), 1)
        flat = hash_floats(f"{self._key(prompt_text, target)}|grad", count * self.dim)
        return flat.reshape(count, self.dim)

    def derive_target(self, prompt_text: str) -> TaskTarget:
        if self.kind == "task_specific":
            index = int(hash_unit(f"{self.seed}|target|{prompt_text}") * len(self.labels))
            return TaskTarget("class_label", self.labels[min(index, len(self.labels) - 1)])
        return TaskTarget("reference_text", "a short continuation")

    def token_char_spans(self, prompt_text: str) -> list[tuple[int, int]]:
        return list(tokenize(prompt_text).spans)


class SmoothStubSurrogate:
    """A tiny genuinely differentiable model: tanh features over hashed
    embeddings with an analytic input gradient.

    loss(E) = sum_t || tanh(W e_t + b_label) ||^2, so finite differences on
    ``loss_from_embeddings`` can independently verify ``input_gradient``.
    """

    def __init__(
        self,
        dim: int = 6,
        hidden: int = 5,
        labels: tuple[str, ...] = ("alpha", "beta"),
        seed: int = 0,
        model_id: str | None = None,
    ):
        self.model_id = model_id or f"smooth-surrogate-s{seed}"
        self.kind = "task_specific"
        self.dim = dim
        self.hidden = hidden
        self.labels = labels
        self.seed = seed
        self.weights = hash_floats(f"{seed}|smooth|W", hidden * dim).reshape(hidden, dim)

    def _bias(self, target: TaskTarget) -> np.ndarray:
        return hash_floats(f"{self.seed}|smooth|bias|{target.kind}|{target.value}", self.hidden)

    def embed(self, token: str) -> np.ndarray:
        return hash_floats(f"{self.seed}|smooth|emb|{token.lower()}", self.dim)

    def _embedding_matrix(self, prompt_text: str) -> np.ndarray:
        tokens = tokenize(prompt_text).tokens
        if not tokens:
            raise ValueError("cannot embed an empty prompt")
        return np.stack([self.embed(t) for t in tokens])

    def loss_from_embeddings(self, embeddings: np.ndarray, target: TaskTarget) -> float:
        hidden = np.tanh(embeddings @ self.weights.T + self._bias(target))
        return float(np.sum(hidden**2))

    def gradient_from_embeddings(self, embeddings: np.ndarray, target: TaskTarget) -> np.ndarray:
        hidden = np.tanh(embeddings @ self.weights.T + self._bias(target))
        dloss_dz = 2.0 * hidden * (1.0 - hidden**2)
        return dloss_dz @ self.weights

    def loss(self, prompt_text: str, target: TaskTarget) -> float:
        return self.loss_from_embeddings(self._embedding_matrix(prompt_text), target)

    def input_gradient(self, prompt_text: str, target: TaskTarget) -> np.ndarray:
        return self.gradient_from_embeddings(self._embedding_matrix(prompt_text), target)

    def derive_target(self, prompt_text: str) -> TaskTarget:
        candidates = [TaskTarget("class_label", label) for label in self.labels]
        return min(candidates, key=lambda t: (self.loss(prompt_text, t), str(t.value)))

    def token_char_spans(self, prompt_text: str) -> list[tuple[int, int]]:
        return list(tokenize(prompt_text).spans)
