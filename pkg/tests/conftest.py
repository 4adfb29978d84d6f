"""Shared test fixtures: scripted providers with hand-placed behavior."""

from __future__ import annotations

import numpy as np
import pytest

from promptveil.errors import OutOfVocabulary
from promptveil.surrogate import TaskTarget


class ScriptedMlmProvider:
    """Fill-mask provider with hand-placed embeddings and responses.

    ``responses`` maps a context string to its ranked (token, score) list;
    the ``default`` list answers anything unscripted.
    """

    def __init__(self, embeddings, responses=None, default=None, model_id="scripted-mlm"):
        self.model_id = model_id
        self.mask_token = "MASKTOK"
        self._embeddings = {t: np.asarray(v, dtype=float) for t, v in embeddings.items()}
        self._responses = dict(responses or {})
        self._default = list(default or [])
        self.calls: list[str] = []

    @property
    def vocabulary(self):
        return frozenset(self._embeddings)

    def fill_mask(self, context_text, mask_marker, top_n):
        self.calls.append(context_text)
        ranked = self._responses.get(context_text, self._default)
        return list(ranked)[:top_n]

    def embedding(self, token):
        if token not in self._embeddings:
            raise OutOfVocabulary(token)
        return self._embeddings[token]


class ScriptedSurrogate:
    """Surrogate whose gradient norm per exact text is looked up in a table.

    The gradient is a single row whose only entry equals the scripted norm,
    so the Frobenius norm reproduces the table value.
    """

    def __init__(self, norms, default=1.0, kind="task_specific", model_id="scripted-surrogate"):
        self.model_id = model_id
        self.kind = kind
        self._norms = dict(norms)
        self._default = default
        self.scored: list[str] = []

    def _norm(self, prompt_text):
        return self._norms.get(prompt_text, self._default)

    def loss(self, prompt_text, target):
        return self._norm(prompt_text)

    def input_gradient(self, prompt_text, target):
        self.scored.append(prompt_text)
        return np.array([[self._norm(prompt_text)]], dtype=float)

    def derive_target(self, prompt_text):
        return TaskTarget("class_label", "fixed")


class FailingSurrogate:
    kind = "task_specific"
    model_id = "failing-surrogate"

    def loss(self, prompt_text, target):
        raise RuntimeError("boom")

    def input_gradient(self, prompt_text, target):
        raise RuntimeError("boom")

    def derive_target(self, prompt_text):
        return TaskTarget("class_label", "fixed")


@pytest.fixture
def basis_embeddings():
    """Orthogonal unit embeddings: any two distinct tokens sit sqrt(2) apart."""

    def build(tokens):
        dim = len(tokens)
        return {t: np.eye(dim)[i] for i, t in enumerate(tokens)}

    return build
