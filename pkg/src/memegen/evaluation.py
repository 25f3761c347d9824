"""Automated and human-evaluation metrics: corpus BLEU, Cohen's kappa,
and two-rater rating aggregation."""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field


class LengthMismatch(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class IncompleteRatings(ValueError):
    pass


@dataclass
class BleuReport:
    bleu: dict[int, float]          # order -> percentage in [0, 100]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    precisions: dict[int, float] = field(default_factory=dict)

    def to_dict(self):
        out = {f"bleu_{n}": round(v, 4) for n, v in sorted(self.bleu.items())}
        out["bp"] = round(self.brevity_penalty, 6)
        return out


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_n: int = 4, smooth: bool = True) -> BleuReport:
    """Corpus-level BLEU-1..max_n with clipped modified precision, uniform
    weights, and brevity penalty exp(1 - r/c) when c < r.

    With `smooth`, zero n-gram precisions floor at 1/(2c) where c is the
    total hypothesis token count, so the geometric mean stays defined on
    tiny corpora.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpus("no hypothesis/reference pairs")

    c = sum(len(h) for h in hypotheses)
    r = sum(len(rf) for rf in references)
    matched = {n: 0 for n in range(1, max_n + 1)}
    total = {n: 0 for n in range(1, max_n + 1)}
    for hyp, ref in zip(hypotheses, references):
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            total[n] += sum(hyp_counts.values())
            matched[n] += sum(min(cnt, ref_counts[g]) for g, cnt in hyp_counts.items())

    bp = 1.0 if c >= r else math.exp(1.0 - r / max(c, 1))
    floor = 1.0 / (2.0 * max(c, 1))
    precisions = {}
    for n in range(1, max_n + 1):
        p = matched[n] / total[n] if total[n] else 0.0
        if p == 0.0 and smooth:
            p = floor
        precisions[n] = p

    scores = {}
    for n in range(1, max_n + 1):
        ps = [precisions[k] for k in range(1, n + 1)]
        if any(p == 0.0 for p in ps):
            scores[n] = 0.0
        else:
            scores[n] = 100.0 * bp * math.exp(sum(math.log(p) for p in ps) / n)
    return BleuReport(scores, bp, c, r, precisions)


@dataclass
class KappaResult:
    p_o: float
    p_e: float
    kappa: float
    n: int
    degenerate: bool = False

    def to_dict(self):
        return {"p_o": round(self.p_o, 6), "p_e": round(self.p_e, 6),
                "kappa": round(self.kappa, 6), "n": self.n,
                "degenerate": self.degenerate}


def cohen_kappa(pairs) -> KappaResult:
    """Chance-corrected agreement between two raters.

    `pairs` is a list of (label_a, label_b). kappa = (p_o - p_e)/(1 - p_e);
    when both raters are constant and equal (p_e = 1) the result is pinned
    to 1 with the degenerate flag set.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one rated item")
    n = len(pairs)
    p_o = sum(1 for a, b in pairs if a == b) / n
    marg_a = Counter(a for a, _ in pairs)
    marg_b = Counter(b for _, b in pairs)
    labels = set(marg_a) | set(marg_b)
    p_e = sum((marg_a[l] / n) * (marg_b[l] / n) for l in labels)
    if p_e >= 1.0 - 1e-12:
        return KappaResult(p_o, p_e, 1.0, n, degenerate=True)
    return KappaResult(p_o, p_e, (p_o - p_e) / (1.0 - p_e), n)


@dataclass(frozen=True)
class RatingRecord:
    meme_id: str
    rater_id: str
    coherence: int
    relevance: int
    likes: bool

    def __post_init__(self):
        if not (1 <= self.coherence <= 4 and 1 <= self.relevance <= 4):
            raise ValueError(f"scores for {self.meme_id} outside 1-4")


def load_ratings(path) -> list[RatingRecord]:
    """CSV with header meme_id,rater_id,coherence,relevance,likes."""
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            records.append(RatingRecord(row["meme_id"], row["rater_id"],
                                        int(row["coherence"]), int(row["relevance"]),
                                        row["likes"].strip() in ("1", "true", "True")))
    return records


def _paired(records) -> dict[str, tuple[RatingRecord, RatingRecord]]:
    by_meme = defaultdict(list)
    for rec in records:
        by_meme[rec.meme_id].append(rec)
    bad = sorted(m for m, rs in by_meme.items() if len(rs) != 2)
    if bad:
        raise IncompleteRatings(f"memes without exactly 2 ratings: {bad[:5]}")
    return {m: tuple(sorted(rs, key=lambda r: r.rater_id)) for m, rs in by_meme.items()}


@dataclass
class RatingSummary:
    mean_coherence: float
    mean_relevance: float
    likes_fraction: float
    n_memes: int

    def to_dict(self):
        return {"coherence": round(self.mean_coherence, 4),
                "relevance": round(self.mean_relevance, 4),
                "user_likes": round(self.likes_fraction, 4),
                "n_memes": self.n_memes}


def aggregate_ratings(records) -> RatingSummary:
    """Disagreements resolve to the two raters' average; user-likes is the
    fraction of all individual ratings marked liked."""
    paired = _paired(records)
    coh = [(a.coherence + b.coherence) / 2.0 for a, b in paired.values()]
    rel = [(a.relevance + b.relevance) / 2.0 for a, b in paired.values()]
    likes = sum(1 for rec in records if rec.likes) / len(records)
    return RatingSummary(sum(coh) / len(coh), sum(rel) / len(rel), likes, len(paired))


def rating_pairs(records, metric: str):
    """Two-rater label pairs for one metric, ready for cohen_kappa."""
    getter = {"coherence": lambda r: r.coherence,
              "relevance": lambda r: r.relevance,
              "likes": lambda r: r.likes}[metric]
    return [(getter(a), getter(b)) for a, b in _paired(records).values()]


def score_distribution(records) -> dict[str, dict[float, int]]:
    """Histogram of per-meme averaged scores at 0.5 granularity."""
    paired = _paired(records)
    hist = {"coherence": Counter(), "relevance": Counter()}
    for a, b in paired.values():
        hist["coherence"][(a.coherence + b.coherence) / 2.0] += 1
        hist["relevance"][(a.relevance + b.relevance) / 2.0] += 1
    return {k: dict(sorted(v.items())) for k, v in hist.items()}
