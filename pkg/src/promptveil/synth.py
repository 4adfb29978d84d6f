"""Seeded synthetic corpora: news-style sentences for benchmarks and tiny-model
training, and portrait-style narratives for offline privacy checks."""

from __future__ import annotations

import random

from .datasets import LabeledExample, PortraitCategories, sample_profile

CITIES = [
    "Toronto", "Vancouver", "London", "Chicago", "Boston", "Sydney",
    "Denver", "Dublin", "Seattle", "Atlanta",
]
PEOPLE = [
    "Alice", "Marcus", "Elena", "Victor", "Priya", "Hassan", "Nora", "Felix",
]
COMPANIES = [
    "Novatek", "Bluepeak", "Orionsoft", "Helioware", "Vantagecorp", "Zephyrlabs",
]

_NEWS_SLOTS = {
    "city": CITIES,
    "person": PEOPLE,
    "company": COMPANIES,
    "team": ["Rovers", "Falcons", "Mariners", "Comets", "Wolves", "Rangers"],
    "sport": ["football", "tennis", "cricket", "hockey", "rugby"],
    "margin": ["narrow", "late", "stunning", "decisive", "dramatic"],
    "verb_fin": ["climbed", "slipped", "rallied", "tumbled", "steadied"],
    "sector": ["energy", "retail", "banking", "shipping", "telecom"],
    "gadget": ["handset", "headset", "drone", "sensor", "router"],
    "feature": ["longer battery", "faster chips", "sharper optics", "lighter frames"],
    "issue": ["trade", "climate", "security", "tariffs", "migration"],
    "number": ["12", "27", "39", "54", "81"],
}

_NEWS_TEMPLATES = [
    ("Sports", "The {team} beat the rivals in {city} after a {margin} finish in {sport} ."),
    ("Sports", "{person} scored twice as the {team} won the {sport} final in {city} ."),
    ("Business", "{company} shares {verb_fin} in {city} trading as the {sector} sector watched ."),
    ("Business", "Analysts said {company} may cut {number} jobs after weak {sector} demand ."),
    ("World", "Officials from {city} met {person} to discuss {issue} policy this week ."),
    ("World", "Leaders gathered in {city} as talks about {issue} stalled for {number} days ."),
    ("Sci/Tech", "{company} unveiled a new {gadget} with {feature} at a {city} expo ."),
    ("Sci/Tech", "Researchers in {city} tested a {gadget} that promises {feature} ."),
]

_COMMON_TAILS = [
    "and markets stayed calm through the day",
    "while readers followed the story closely",
    "as officials promised more detail soon",
    "and the mood in the room was steady",
    "while the crowd waited for updates",
]


def make_news_examples(count: int, seed: int) -> list[LabeledExample]:
    """AG-News-flavored labeled sentences with entity slots and rare tail words."""
    rng = random.Random(seed)
    examples = []
    for _ in range(count):
        label, template = rng.choice(_NEWS_TEMPLATES)
        values = {name: rng.choice(pool) for name, pool in _NEWS_SLOTS.items()}
        sentence = template.format(**values)
        if rng.random() < 0.7:
            sentence = sentence[:-1].rstrip() + " , " + rng.choice(_COMMON_TAILS) + " ."
        examples.append(LabeledExample(text=sentence, label=label))
    return examples


_COMPLAINTS = [
    "I often feel like my emotions are all over the place",
    "I cannot sleep through the night anymore",
    "I keep losing focus during ordinary tasks",
    "I worry constantly about small things",
    "I feel drained before the day even starts",
]
_DURATIONS = ["March", "January", "last spring", "two months ago", "the holidays"]


def make_portrait_examples(
    count: int, seed: int, categories: PortraitCategories | None = None
) -> list[LabeledExample]:
    """Offline portrait-style narratives with full attribute ground truth.

    A deterministic stand-in for the chat-generated dataset: every narrative
    embeds the profile's age, occupation, and location verbatim.
    """
    rng = random.Random(seed)
    examples = []
    for i in range(count):
        profile = sample_profile(seed * 100003 + i, categories)
        complaint = rng.choice(_COMPLAINTS)
        since = rng.choice(_DURATIONS)
        text = (
            f"I'm a {profile.age}-year-old {profile.occupation} in {profile.location}, "
            f"and {complaint} since {since}. Work has been harder to face each week, "
            f"and I am hoping to understand what is happening to me."
        )
        examples.append(
            LabeledExample(
                text=text,
                label=profile.disorder,
                attributes=profile.as_attributes(),
            )
        )
    return examples


def make_benchmark_prompt(token_count: int, seed: int) -> str:
    """A synthetic prompt of roughly ``token_count`` word tokens."""
    rng = random.Random(seed)
    words = []
    while len(words) < token_count:
        sentence = rng.choice(_NEWS_TEMPLATES)[1].format(
            **{name: rng.choice(pool) for name, pool in _NEWS_SLOTS.items()}
        )
        words.extend(sentence.split())
    return " ".join(words[:token_count])
