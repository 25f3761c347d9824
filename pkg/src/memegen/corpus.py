"""Meme-caption corpus loading, template catalog, splitting, and the
valence-lexicon sentiment gate used to filter evaluation sentences."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .text import tokenize

SENTIMENT_NORM = 15.0  # fixed normalization constant of the valence score


class MalformedLine(ValueError):
    pass


class UnknownTemplate(ValueError):
    pass


class BadRatios(ValueError):
    pass


@dataclass(frozen=True)
class CaptionBox:
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    token: str
    image_paths: tuple[str, ...]
    caption_box: CaptionBox
    position: str = "top"  # "top" or "bottom"


@dataclass
class TemplateCatalog:
    entries: list[CatalogEntry]
    _by_name: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        names = [self._norm(e.name) for e in self.entries]
        tokens = [e.token for e in self.entries]
        if len(set(names)) != len(names) or len(set(tokens)) != len(tokens):
            raise ValueError("template names/tokens must be unique")
        if len(self.entries) < 2:
            raise ValueError("catalog needs at least 2 templates")
        for e in self.entries:
            if not e.image_paths:
                raise ValueError(f"template {e.name!r} has no images")
        self._by_name = {n: i for i, n in enumerate(names)}

    @staticmethod
    def _norm(name: str) -> str:
        return " ".join(name.lower().split())

    def __len__(self):
        return len(self.entries)

    def index_of(self, name: str) -> int:
        idx = self._by_name.get(self._norm(name))
        if idx is None:
            raise UnknownTemplate(f"unknown template {name!r}")
        return idx

    @classmethod
    def load(cls, path):
        from .text import template_token

        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        entries = []
        for t in raw["templates"]:
            box = t["caption_box"]
            entries.append(CatalogEntry(
                name=t["name"],
                token=template_token(t["name"]),
                image_paths=tuple(t["images"]),
                caption_box=CaptionBox(box["x"], box["y"], box["w"], box["h"]),
                position=t.get("position", "top"),
            ))
        return cls(entries)


@dataclass(frozen=True)
class MemeSample:
    template_id: int
    caption: str


def normalize_caption(text: str) -> str:
    return " ".join(text.lower().split())


def load_corpus(path, catalog: TemplateCatalog) -> list[MemeSample]:
    """Read JSONL of {"template": name, "caption": text} into MemeSamples."""
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                template, caption = obj["template"], obj["caption"]
                if not isinstance(template, str) or not isinstance(caption, str):
                    raise TypeError
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError):
                raise MalformedLine(f"line {lineno}: not a valid corpus record") from None
            try:
                tid = catalog.index_of(template)
            except UnknownTemplate:
                raise UnknownTemplate(f"line {lineno}: unknown template {template!r}") from None
            caption = normalize_caption(caption)
            if not caption:
                raise MalformedLine(f"line {lineno}: empty caption")
            samples.append(MemeSample(tid, caption))
    return samples


@dataclass
class CorpusSplit:
    train: list[MemeSample]
    validation: list[MemeSample]
    test: list[MemeSample]
    seed: int


def split_corpus(samples, ratios, seed: int) -> CorpusSplit:
    """Seeded shuffle, then contiguous cut with largest-remainder rounding."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios {ratios} must be positive and sum to 1")
    order = list(samples)
    random.Random(seed).shuffle(order)
    n = len(order)
    exact = [r * n for r in ratios]
    sizes = [math.floor(e) for e in exact]
    remainders = sorted(range(3), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in range(n - sum(sizes)):
        sizes[remainders[i]] += 1
    a, b = sizes[0], sizes[0] + sizes[1]
    return CorpusSplit(order[:a], order[a:b], order[b:], seed)


@dataclass
class SentimentLexicon:
    """Word -> valence (roughly [-4, +4]); case-insensitive, unknown -> 0."""

    valences: dict[str, float]

    def valence(self, word: str) -> float:
        return self.valences.get(word.lower(), 0.0)

    @classmethod
    def load(cls, path):
        valences = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                word, score = line.split("\t")
                valences[word.lower()] = float(score)
        return cls(valences)


def sentiment_score(sentence: str, lexicon: SentimentLexicon) -> float:
    """Summed valence squashed to [-1, 1]: V / sqrt(V^2 + 15)."""
    v = sum(lexicon.valence(t) for t in tokenize(sentence))
    if v == 0.0:
        return 0.0
    return v / math.sqrt(v * v + SENTIMENT_NORM)


def filter_non_negative(sentences, lexicon: SentimentLexicon) -> list[str]:
    return [s for s in sentences if sentiment_score(s, lexicon) >= 0.0]


def corpus_stats(samples, catalog: TemplateCatalog) -> dict[str, int]:
    """Caption count per template, every catalog entry present."""
    counts = {e.name: 0 for e in catalog.entries}
    for s in samples:
        counts[catalog.entries[s.template_id].name] += 1
    return counts
