"""Tokenization, vocabulary, and the POS-based corruption that turns a
caption into the content-word input the caption generator is trained on."""
from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field

PAD, BOS, EOS, UNK, MASK = 0, 1, 2, 3, 4
RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>", "<mask>"]

_STRIP = string.punctuation + "“”‘’…"

# tags kept in the corrupted encoder input ("content" words)
CONTENT_TAGS = {"NOUN", "PROPN", "NUM"}
POS_TAGS = {"NOUN", "PROPN", "VERB", "ADJ", "DET", "ADP", "ADV", "PRON", "NUM", "OTHER"}


class InvalidId(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP)
        if tok:
            out.append(tok)
    return out


def template_token(name: str) -> str:
    """Reserved vocabulary token for a catalog template, e.g.
    'Success Kid' -> '<t:success_kid>'."""
    slug = "_".join(name.lower().split())
    return f"<t:{slug}>"


@dataclass
class Vocabulary:
    """Bijective token<->id map; ids 0..4 reserved, then one token per
    catalog template, then corpus tokens."""

    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if self.tokens[:5] != RESERVED:
            raise ValueError("reserved tokens missing or reordered")

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise InvalidId(f"id {idx} out of range for vocabulary of {len(self.tokens)}")
        return self.tokens[idx]

    def encode(self, text_or_tokens) -> list[int]:
        toks = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else text_or_tokens
        return [self.id_of(t) for t in toks]

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            tok = self.token_of(int(i))
            if int(i) in (PAD, BOS, EOS):
                continue
            words.append(tok)
        return " ".join(words)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


def build_vocab(samples, catalog, min_freq: int = 1) -> Vocabulary:
    """Reserved + template tokens, then corpus tokens with frequency >=
    min_freq ordered by (freq desc, token asc). Deterministic."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    tokens = list(RESERVED)
    tokens += [template_token(e.name) for e in catalog.entries]
    counts = Counter()
    for s in samples:
        counts.update(tokenize(s.caption))
    for tok, freq in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if freq >= min_freq:
            tokens.append(tok)
    return Vocabulary(tokens)


@dataclass
class TagLexicon:
    """Word -> POS via exact lookup, then longest matching suffix rule,
    then NOUN."""

    words: dict[str, str]
    suffixes: list[tuple[str, str]]
    default: str = "NOUN"

    def tag(self, token: str) -> str:
        token = token.lower()
        if token in self.words:
            return self.words[token]
        best = None
        for suffix, tag in self.suffixes:
            if token.endswith(suffix) and len(token) > len(suffix):
                if best is None or len(suffix) > len(best[0]):
                    best = (suffix, tag)
        return best[1] if best else self.default

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for word, tag in sorted(self.words.items()):
                f.write(f"{word}\t{tag}\n")
            for suffix, tag in self.suffixes:
                f.write(f"#suffix {suffix}\t{tag}\n")

    @classmethod
    def load(cls, path):
        words, suffixes = {}, []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                key, tag = line.split("\t")
                tag = tag.strip().upper()
                if tag not in POS_TAGS:
                    raise ValueError(f"unknown POS tag {tag!r}")
                if key.startswith("#suffix"):
                    suffixes.append((key.split(None, 1)[1], tag))
                else:
                    words[key.lower()] = tag
        return cls(words, suffixes)


def pos_tag(tokens: list[str], lexicon: TagLexicon) -> list[str]:
    return [lexicon.tag(t) for t in tokens]


def mask_to_content(tokens: list[str], tags: list[str], keep_verbs: bool = True) -> list[str]:
    """Keep nouns/proper nouns/numerals (plus their immediately preceding
    adjective run) and, when keep_verbs, verbs. Falls back to the full
    input when nothing survives."""
    if len(tokens) != len(tags):
        raise LengthMismatch(f"{len(tokens)} tokens vs {len(tags)} tags")
    keep = [False] * len(tokens)
    for i, tag in enumerate(tags):
        if tag in CONTENT_TAGS or (keep_verbs and tag == "VERB"):
            keep[i] = True
    # adjective run directly before a kept NOUN/PROPN belongs to the noun phrase
    for i, tag in enumerate(tags):
        if tag in ("NOUN", "PROPN") and keep[i]:
            j = i - 1
            while j >= 0 and tags[j] == "ADJ":
                keep[j] = True
                j -= 1
    kept = [t for t, k in zip(tokens, keep) if k]
    return kept if kept else list(tokens)
