"""Corpus loaders and the synthetic patient-portrait generator."""

from __future__ import annotations

import csv
import json
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MisconfiguredCategories, ParseError
from .evaluation import DEFAULT_TEMPLATES, TaskTemplate

PORTRAIT_ATTRIBUTES = ("age", "gender", "location", "occupation", "disorder")

# Editable category pools; sizes follow the 20 locations / 20 occupations /
# 10 disorders convention the portrait generator expects.
DEFAULT_LOCATIONS = [
    "Toronto", "Vancouver", "London", "Manchester", "Dublin",
    "Sydney", "Melbourne", "Auckland", "Chicago", "Boston",
    "Seattle", "Denver", "Atlanta", "Portland", "Edinburgh",
    "Cardiff", "Brisbane", "Ottawa", "Houston", "Phoenix",
]
DEFAULT_OCCUPATIONS = [
    "teacher", "nurse", "driver", "accountant", "chef",
    "electrician", "architect", "pharmacist", "journalist", "plumber",
    "librarian", "paramedic", "carpenter", "waiter", "engineer",
    "cashier", "firefighter", "barber", "florist", "mechanic",
]
DEFAULT_DISORDERS = [
    "depression", "generalized anxiety disorder", "panic disorder",
    "bipolar disorder", "obsessive-compulsive disorder",
    "post-traumatic stress disorder", "social anxiety disorder",
    "insomnia disorder", "attention-deficit hyperactivity disorder",
    "anorexia nervosa",
]


@dataclass(frozen=True)
class PortraitCategories:
    locations: tuple[str, ...] = tuple(DEFAULT_LOCATIONS)
    occupations: tuple[str, ...] = tuple(DEFAULT_OCCUPATIONS)
    disorders: tuple[str, ...] = tuple(DEFAULT_DISORDERS)

    def __post_init__(self):
        expected = {"locations": 20, "occupations": 20, "disorders": 10}
        for name, want in expected.items():
            got = len(getattr(self, name))
            if got != want:
                warnings.warn(
                    f"{name} has {got} entries, expected {want}", MisconfiguredCategories
                )


@dataclass(frozen=True)
class PortraitProfile:
    age: int
    gender: str
    location: str
    occupation: str
    disorder: str

    def __post_init__(self):
        if not 18 <= self.age <= 65:
            raise ValueError("age must lie in [18, 65]")
        if self.gender not in ("male", "female"):
            raise ValueError(f"unknown gender {self.gender!r}")

    def as_attributes(self) -> dict[str, str]:
        return {
            "age": str(self.age),
            "gender": self.gender,
            "location": self.location,
            "occupation": self.occupation,
            "disorder": self.disorder,
        }


@dataclass
class LabeledExample:
    text: str
    label: str
    attributes: dict[str, str] = field(default_factory=dict)
    expert_reviewed: bool = False

    def to_record(self) -> dict:
        record = {"text": self.text, "label": self.label}
        if self.attributes:
            record["attributes"] = dict(self.attributes)
            record["expert_reviewed"] = self.expert_reviewed
        return record


def sample_profile(seed: int, categories: PortraitCategories | None = None) -> PortraitProfile:
    """Draw one profile uniformly from each category pool; fixed seed, fixed draw."""
    categories = categories or PortraitCategories()
    rng = random.Random(seed)
    return PortraitProfile(
        age=rng.randint(18, 65),
        gender=rng.choice(["male", "female"]),
        location=rng.choice(list(categories.locations)),
        occupation=rng.choice(list(categories.occupations)),
        disorder=rng.choice(list(categories.disorders)),
    )


def generate_portrait(
    profile: PortraitProfile,
    client,
    template: TaskTemplate | None = None,
) -> LabeledExample:
    """Have the chat model write a first-person report for the profile.

    The narrative is stored with the full attribute map as ground truth for
    the PII-inference attack; clinical review is a manual step, so
    ``expert_reviewed`` starts False.
    """
    template = template or DEFAULT_TEMPLATES["portrait_generation"]
    bindings = {
        "AGE": str(profile.age),
        "GENDER": profile.gender,
        "OCCUPATION": profile.occupation,
        "DISORDER": profile.disorder,
        "LOCATION": profile.location,
    }
    for name in bindings:
        if f"<<<{name}>>>" not in template.user_template:
            raise ValueError(f"template is missing the <<<{name}>>> placeholder")
    user = template.render(**bindings)
    text = client.complete(template.system_prompt, user)
    return LabeledExample(
        text=text,
        label=profile.disorder,
        attributes=profile.as_attributes(),
        expert_reviewed=False,
    )


def load_corpus(
    path: str | Path,
    format: str = "jsonl",
    schema: dict[str, str] | None = None,
) -> list[LabeledExample]:
    """Load examples from a delimited or line-JSON file.

    ``schema`` maps the example fields ("text", "label") to column names or
    JSON keys. Malformed rows raise ParseError naming the offending line.
    """
    schema = schema or {"text": "text", "label": "label"}
    path = Path(path)
    if format == "jsonl":
        return _load_jsonl(path, schema)
    if format in ("csv", "tsv"):
        return _load_delimited(path, schema, delimiter="\t" if format == "tsv" else ",")
    raise ValueError(f"unknown corpus format {format!r}")


def _load_jsonl(path: Path, schema: dict[str, str]) -> list[LabeledExample]:
    examples = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            examples.append(_example_from_row(row, schema, path, lineno))
    return examples


def _load_delimited(path: Path, schema: dict[str, str], delimiter: str) -> list[LabeledExample]:
    examples = []
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=2):  # header is line 1
            examples.append(_example_from_row(row, schema, path, lineno))
    return examples


def _example_from_row(
    row: dict, schema: dict[str, str], path: Path, lineno: int
) -> LabeledExample:
    resolved = {}
    for fieldname in ("text", "label"):
        column = schema.get(fieldname, fieldname)
        value = row.get(column)
        if value is None:
            raise ParseError(f"{path}:{lineno}: missing column {column!r}")
        resolved[fieldname] = str(value)
    attributes = row.get("attributes") if isinstance(row.get("attributes"), dict) else {}
    return LabeledExample(
        text=resolved["text"],
        label=resolved["label"],
        attributes={str(k): str(v) for k, v in (attributes or {}).items()},
        expert_reviewed=bool(row.get("expert_reviewed", False)),
    )


def save_corpus(examples: list[LabeledExample], path: str | Path) -> None:
    """Write examples as UTF-8 JSON lines (the loader's round-trip partner)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps(example.to_record(), ensure_ascii=False) + "\n")
