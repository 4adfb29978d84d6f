"""Gradient-based scoring of candidate replacements with a local white-box
surrogate model, and selection of the norm-minimizing candidate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .candidate_generation import CandidateSet
from .core import Replacement, TokenizedPrompt, splice_with_span
from .errors import SurrogateFailure


@dataclass(frozen=True)
class TaskTarget:
    """The output the surrogate's loss is measured against."""

    kind: str  # "class_label" | "reference_text"
    value: int | str

    def __post_init__(self):
        if self.kind not in ("class_label", "reference_text"):
            raise ValueError(f"unknown target kind {self.kind!r}")


@runtime_checkable
class SurrogateModel(Protocol):
    """Contract for local models exposing task loss and input gradients.

    ``input_gradient`` returns one row per model token over the model's input
    embeddings. Providers that also implement ``token_char_spans`` (character
    span per gradient row) unlock position-scoped scoring.
    """

    model_id: str
    kind: str  # "task_specific" | "general"

    def loss(self, prompt_text: str, target: TaskTarget) -> float: ...

    def input_gradient(self, prompt_text: str, target: TaskTarget) -> np.ndarray: ...

    def derive_target(self, prompt_text: str) -> TaskTarget:
        """The model's own prediction on a prompt, used when no gold target exists."""
        ...


def _check_target(surrogate: SurrogateModel, target: TaskTarget) -> None:
    if target.kind == "class_label" and surrogate.kind != "task_specific":
        raise SurrogateFailure(
            f"class_label targets need a task_specific surrogate, got {surrogate.kind!r}"
        )


def gradient_norm(surrogate: SurrogateModel, prompt_text: str, target: TaskTarget) -> float:
    """L2 norm of the loss gradient over the entire input embedding sequence."""
    if not prompt_text:
        raise SurrogateFailure("prompt_text must be non-empty")
    _check_target(surrogate, target)
    try:
        grad = np.asarray(surrogate.input_gradient(prompt_text, target), dtype=float)
    except SurrogateFailure:
        raise
    except Exception as exc:
        raise SurrogateFailure(f"{type(exc).__name__}: {exc}") from exc
    norm = float(np.linalg.norm(grad))
    if not math.isfinite(norm):
        raise SurrogateFailure(f"non-finite gradient norm {norm}")
    return norm


def _position_scoped_norm(
    surrogate: SurrogateModel,
    prompt_text: str,
    target: TaskTarget,
    char_span: tuple[int, int],
) -> float:
    """Norm restricted to gradient rows whose tokens overlap ``char_span``."""
    spans_fn = getattr(surrogate, "token_char_spans", None)
    if spans_fn is None:
        raise SurrogateFailure(
            f"surrogate {surrogate.model_id!r} does not expose token_char_spans; "
            "position_only scoping is unavailable"
        )
    _check_target(surrogate, target)
    try:
        grad = np.asarray(surrogate.input_gradient(prompt_text, target), dtype=float)
        spans = spans_fn(prompt_text)
    except SurrogateFailure:
        raise
    except Exception as exc:
        raise SurrogateFailure(f"{type(exc).__name__}: {exc}") from exc
    if len(spans) != grad.shape[0]:
        raise SurrogateFailure(
            f"gradient rows ({grad.shape[0]}) do not match token spans ({len(spans)})"
        )
    rows = [i for i, (s, e) in enumerate(spans) if s < char_span[1] and e > char_span[0]]
    if not rows:
        raise SurrogateFailure(f"no model tokens overlap span {char_span}")
    norm = float(np.linalg.norm(grad[rows]))
    if not math.isfinite(norm):
        raise SurrogateFailure(f"non-finite gradient norm {norm}")
    return norm


def select_replacement(
    prompt: TokenizedPrompt,
    applied: list[Replacement],
    position: int,
    filtered: CandidateSet,
    surrogate: SurrogateModel,
    target: TaskTarget,
    tie_break: str = "by_candidate_rank",
    gradient_scope: str = "full_input",
) -> Replacement:
    """Splice each candidate into the current text and keep the gradient argmin.

    Ties go to the lower candidate rank (higher MLM score). A candidate whose
    scoring fails is skipped; if every candidate fails, the rank-1 candidate
    wins with the position flagged.
    """
    if not filtered.candidates:
        raise ValueError("filtered candidate set must be non-empty")
    if tie_break != "by_candidate_rank":
        raise ValueError(f"unknown tie_break {tie_break!r}")

    base = [(r.position, r.chosen) for r in applied]
    best_rank = None
    best_norm = math.inf
    for rank, cand in enumerate(filtered.candidates):
        text, span = splice_with_span(prompt, base + [(position, cand.token)], track=position)
        try:
            if gradient_scope == "position_only":
                norm = _position_scoped_norm(surrogate, text, target, span)
            else:
                norm = gradient_norm(surrogate, text, target)
        except SurrogateFailure:
            continue
        if norm < best_norm:
            best_norm = norm
            best_rank = rank

    fallback = filtered.fallback_used
    if best_rank is None:
        best_rank = 0
        best_norm = math.inf
        fallback = "surrogate_failure"
    chosen = filtered.candidates[best_rank]
    return Replacement(
        position=position,
        original=filtered.original,
        chosen=chosen.token,
        gradient_norm=best_norm,
        candidates_considered=len(filtered.candidates),
        fallback=fallback,
    )
