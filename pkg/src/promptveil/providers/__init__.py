"""Provider registry: string identifiers from run configs resolve to concrete
NER, fill-mask, and surrogate implementations."""

from __future__ import annotations

from ..errors import ConfigError
from .stubs import (
    HashMlmProvider,
    HashSurrogate,
    LexiconNerProvider,
    NullNerProvider,
    SmoothStubSurrogate,
    StubNerProvider,
)

__all__ = [
    "HashMlmProvider",
    "HashSurrogate",
    "LexiconNerProvider",
    "NullNerProvider",
    "SmoothStubSurrogate",
    "StubNerProvider",
    "resolve_ner",
    "resolve_mlm",
    "resolve_surrogate",
]


def _parse_spec(spec: str) -> tuple[str, dict[str, str]]:
    name, _, raw = spec.partition(":")
    options: dict[str, str] = {}
    if raw:
        for item in raw.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"malformed provider option {item!r} in {spec!r}")
            options[key.strip()] = value.strip()
    return name, options


def resolve_ner(spec: str):
    name, options = _parse_spec(spec)
    if name == "lexicon":
        return LexiconNerProvider()
    if name == "none":
        return NullNerProvider()
    raise ConfigError(f"unknown NER provider {spec!r} (known: lexicon, none)")


def resolve_mlm(spec: str, seed: int = 0):
    name, options = _parse_spec(spec)
    if name == "hash":
        return HashMlmProvider(
            vocab_size=int(options.get("vocab", 256)),
            dim=int(options.get("dim", 16)),
            seed=int(options.get("seed", seed)),
        )
    raise ConfigError(f"unknown fill-mask provider {spec!r} (known: hash)")


def resolve_surrogate(spec: str, kind: str = "task_specific", seed: int = 0):
    name, options = _parse_spec(spec)
    if name == "hash":
        return HashSurrogate(kind=kind, seed=int(options.get("seed", seed)))
    if name == "smooth":
        return SmoothStubSurrogate(seed=int(options.get("seed", seed)))
    raise ConfigError(f"unknown surrogate provider {spec!r} (known: hash, smooth)")
