"""Task-utility measurement against a chat-completion endpoint: classification
accuracy, QA accuracy, and answer quality scoring by an LLM judge."""

from __future__ import annotations

import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import requests

from .errors import EvaluationAborted, TransportError, UnparseableJudgment

_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


@dataclass
class ChatClient:
    """Minimal chat-completion client.

    Sends ``{"model", "messages", "temperature"}`` as JSON and consumes the
    first choice's message content. The API key is read from the environment
    variable named by ``api_key_env`` and never written to disk or logs.
    Temperature is pinned to 0 so evaluation runs are repeatable.
    """

    base_url: str
    model: str
    api_key_env: str = "CHAT_API_KEY"
    max_retries: int = 3
    timeout: float = 30.0
    temperature: float = 0.0

    def __post_init__(self):
        if self.temperature != 0.0:
            raise ValueError("evaluation requires temperature 0")

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            try:
                response = requests.post(
                    self.base_url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if response.status_code == 200:
                    try:
                        return response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise TransportError(f"malformed completion response: {exc}") from exc
                if response.status_code not in _TRANSIENT_STATUS:
                    raise TransportError(f"endpoint returned HTTP {response.status_code}")
                last_error = f"HTTP {response.status_code}"
            if attempt < self.max_retries:
                time.sleep(0.5 * (2**attempt))
        raise TransportError(f"gave up after {self.max_retries + 1} attempts: {last_error}")


@dataclass
class CallableChatClient:
    """Offline stand-in: delegates to a plain function. Used by tests and the
    mock evaluation path so the whole suite runs without a network."""

    responder: Callable[[str, str], str]
    model: str = "mock"
    temperature: float = 0.0

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        return self.responder(system_prompt, user_prompt)


@dataclass(frozen=True)
class TaskTemplate:
    """A system prompt plus a user template with <<<NAME>>> placeholders."""

    task: str
    system_prompt: str
    user_template: str

    def render(self, **values: str) -> str:
        rendered = self.user_template
        for name, value in values.items():
            placeholder = f"<<<{name}>>>"
            occurrences = rendered.count(placeholder)
            if occurrences != 1:
                raise ValueError(
                    f"placeholder {placeholder} must appear exactly once in the "
                    f"{self.task} template, found {occurrences}"
                )
            rendered = rendered.replace(placeholder, value)
        return rendered


DEFAULT_TEMPLATES: dict[str, TaskTemplate] = {
    "sentiment": TaskTemplate(
        task="sentiment",
        system_prompt=(
            "Classify the sentiment of each sentence in <<<SENTENCE>>> as 'Positive' or "
            "'Negative'. Give the sentiment classifications without any other preamble text.\n\n"
            "###EXAMPLE SENTENCE\n\n"
            "Highly recommend this company for travel plans involving rail.\n\n"
            "EXAMPLE OUTPUT\n\n"
            "Positive###"
        ),
        user_template="<<<TEXT>>>",
    ),
    "topic": TaskTemplate(
        task="topic",
        system_prompt=(
            "Classify the topic of each news article in <<<NEWS>>> as 'World', 'Sports', "
            "'Business', or 'Sci/Tech'. Give the topic classification without any other "
            "preamble text.\n\n"
            "###EXAMPLE NEWS\n\n"
            "Dollar Briefly Hits 4-Wk Low Vs Euro  LONDON (Reuters) - The dollar dipped to a "
            "four-week low  against the euro on Monday before rising slightly on  "
            "profit-taking, but steep oil prices and weak U.S. data  continued to fan worries "
            "about the health of the world's  largest economy.\n\n"
            "EXAMPLE OUTPUT\n\n"
            "Business###"
        ),
        user_template="<<<TEXT>>>",
    ),
    "qa": TaskTemplate(
        task="qa",
        system_prompt=(
            "You are an experienced psychologist. Your task is to listen to the patient's "
            "self-description and a most likely mental health diagnosis based on their symptoms."
        ),
        user_template="<<<TEXT>>>\n\nDiagnosis:",
    ),
    "quality_judge": TaskTemplate(
        task="quality_judge",
        system_prompt=(
            "You are an experienced psychologist with expertise in mental health diagnoses. "
            "Your task is to assess the quality of a diagnosis based on the patient's "
            "self-description. You will evaluate the diagnosis on four dimensions, each on a "
            "scale from 1 to 5, where 1 indicates poor performance and 5 indicates excellent "
            "performance. After evaluating all four dimensions, please also provide an overall "
            "score (1 to 5) that reflects your holistic judgment of the diagnosis "
            "quality.Please consider the following criteria:\n\n"
            "Correctness - How clinically accurate is the diagnosis in light of the symptoms "
            "described?\n\n"
            "Relevance - How well does the diagnosis relate to and reflect the patient's "
            "specific symptoms?\n\n"
            "Completeness - Does the diagnosis address all key aspects of the patient's "
            "self-report without overlooking significant information?\n\n"
            "Readability - Is the diagnosis clearly written, well-structured, and "
            "understandable?"
        ),
        user_template=(
            "The patient has provided the following self-description. The diagnosis made by "
            "the doctor is as follows: TEXT:<<<ORIGINAL TEXT>>> Diagnosis:<<<ANSWER>>> Please "
            "provide a score from 1 to 5 for each of the following dimensions: Correctness, "
            "Relevance, Completeness, Readability.\n"
            "Then, based on the four criteria above, provide an Overall Score (1 to 5) that "
            "reflects your general assessment of the diagnosis."
        ),
    ),
    "portrait_generation": TaskTemplate(
        task="portrait_generation",
        system_prompt="You are a patient and are seeing a psychiatrist.",
        user_template=(
            "Describe to a psychiatrist in the typical voice of a <<<AGE>>>-year-old "
            "<<<GENDER>>> <<<OCCUPATION>>> with sympthons of <<<DISORDER>>> in <<<LOCATION>>>. "
            "The self-report MUST reflect the patient's LOCATION and OCCUPATION.100 words "
            "or less."
        ),
    ),
}

TASK_LABEL_SETS: dict[str, list[str]] = {
    "sentiment": ["Positive", "Negative"],
    "topic": ["World", "Sports", "Business", "Sci/Tech"],
}


@dataclass
class UtilityReport:
    """Accuracy plus optional 1-5 quality scores with full transcripts."""

    task: str
    total: int
    evaluated: int
    correct: int
    accuracy: float
    transcripts: list[dict] = field(default_factory=list)
    quality_scores: list[int] = field(default_factory=list)
    quality_mean: float | None = None
    failures: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "total": self.total,
            "evaluated": self.evaluated,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "quality_scores": list(self.quality_scores),
            "quality_mean": self.quality_mean,
            "failures": list(self.failures),
            "transcripts": list(self.transcripts),
        }


def _classification_correct(response: str, label: str, label_set: list[str]) -> bool:
    """First-line extraction, then exact match against the closed label set.

    Responses matching no known label count as wrong rather than excluded.
    """
    lines = [line.strip() for line in response.strip().splitlines() if line.strip()]
    predicted = lines[0].lower() if lines else ""
    known = {candidate.lower() for candidate in label_set}
    return predicted in known and predicted == label.strip().lower()


def _qa_correct(response: str, label: str) -> bool:
    return label.strip().lower() in response.lower()


def run_task(
    prompts: list[str],
    labels: list[str],
    template: TaskTemplate,
    client,
    label_set: list[str] | None = None,
    concurrency: int = 1,
) -> UtilityReport:
    """Render each prompt into the task template, query the endpoint, and score.

    Transport failures are recorded and excluded from the accuracy
    denominator; the run aborts only when more than half of the calls fail.
    """
    if len(prompts) != len(labels):
        raise ValueError(f"{len(prompts)} prompts for {len(labels)} labels")
    if label_set is None:
        label_set = TASK_LABEL_SETS.get(template.task, [])

    def call(item: tuple[int, str]) -> tuple[int, str | None, str | None]:
        index, prompt = item
        user = template.render(TEXT=prompt)
        try:
            return index, client.complete(template.system_prompt, user), None
        except Exception as exc:
            return index, None, f"{type(exc).__name__}: {exc}"

    items = list(enumerate(prompts))
    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            raw = list(pool.map(call, items))
    else:
        raw = [call(item) for item in items]
    raw.sort(key=lambda r: r[0])

    failures = [f"example {i}: {err}" for i, _, err in raw if err is not None]
    if len(failures) * 2 > len(prompts):
        raise EvaluationAborted(
            f"{len(failures)}/{len(prompts)} calls failed; aborting the run"
        )

    correct = 0
    evaluated = 0
    transcripts = []
    for index, response, err in raw:
        entry = {"index": index, "prompt": prompts[index], "label": labels[index]}
        if err is not None:
            entry["error"] = err
            transcripts.append(entry)
            continue
        if template.task == "qa":
            hit = _qa_correct(response, labels[index])
        else:
            hit = _classification_correct(response, labels[index], label_set)
        evaluated += 1
        correct += int(hit)
        entry["response"] = response
        entry["correct"] = hit
        transcripts.append(entry)

    accuracy = correct / evaluated if evaluated else 0.0
    return UtilityReport(
        task=template.task,
        total=len(prompts),
        evaluated=evaluated,
        correct=correct,
        accuracy=accuracy,
        transcripts=transcripts,
        failures=failures,
    )


@dataclass(frozen=True)
class QualityJudgment:
    correctness: int
    relevance: int
    completeness: int
    readability: int
    overall: int


_DIMENSIONS = ("correctness", "relevance", "completeness", "readability")
_SCORE_RE = re.compile(r"\b([1-5])\b")


def _parse_judgment(response: str) -> QualityJudgment | None:
    scores = {}
    for dim in _DIMENSIONS:
        m = re.search(rf"{dim}\D{{0,12}}([1-5])\b", response, re.IGNORECASE)
        if m:
            scores[dim] = int(m.group(1))
    overall_m = re.search(r"overall(?:\s+score)?\D{0,12}([1-5])\b", response, re.IGNORECASE)
    if len(scores) == 4 and overall_m:
        return QualityJudgment(overall=int(overall_m.group(1)), **scores)

    digits = [int(d) for d in _SCORE_RE.findall(response)]
    if len(digits) >= 5:
        return QualityJudgment(
            correctness=digits[0],
            relevance=digits[1],
            completeness=digits[2],
            readability=digits[3],
            overall=digits[-1],
        )
    return None


def judge_quality(
    original: str,
    answer: str,
    template: TaskTemplate,
    client,
) -> QualityJudgment:
    """Ask the judge for four dimension scores plus an overall 1-5 score.

    A malformed response is retried once, then raises UnparseableJudgment.
    """
    user = template.render(**{"ORIGINAL TEXT": original, "ANSWER": answer})
    last_response = ""
    for _attempt in range(2):
        last_response = client.complete(template.system_prompt, user)
        judgment = _parse_judgment(last_response)
        if judgment is not None:
            return judgment
    raise UnparseableJudgment(f"no scores found in judge response: {last_response[:200]!r}")
