import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memegen.evaluation import (EmptyCorpus, IncompleteRatings, KappaResult,
                                LengthMismatch, RatingRecord, aggregate_ratings,
                                bleu, cohen_kappa, load_ratings, rating_pairs,
                                score_distribution)


def _hand_bleu1(hyps, refs, smooth=True):
    """Written-out worked oracle for BLEU-1: clipped unigram counts, then
    brevity penalty exp(1 - r/c) only when the hypothesis corpus is
    shorter than the reference corpus."""
    matched = 0
    total = 0
    for hyp, ref in zip(hyps, refs):
        ref_counts = Counter(ref)
        for tok, cnt in Counter(hyp).items():
            matched += min(cnt, ref_counts[tok])
        total += len(hyp)
    c = sum(len(h) for h in hyps)
    r = sum(len(rf) for rf in refs)
    p1 = matched / total if total else 0.0
    if p1 == 0.0 and smooth:
        p1 = 1.0 / (2 * c)
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return 100.0 * bp * p1


def test_bleu_perfect_match():
    hyp = [["when", "you", "win", "the", "game"], ["much", "wow", "very", "meme"]]
    report = bleu(hyp, [list(h) for h in hyp])
    assert all(report.bleu[n] == pytest.approx(100.0) for n in range(1, 5))
    assert report.brevity_penalty == 1.0


def test_bleu_zero_overlap_hits_floor():
    report = bleu([["a", "b"]], [["c", "d"]])
    assert 0.0 < report.bleu[1] <= 100.0 / (2 * 2) * 1.0
    strict = bleu([["a", "b"]], [["c", "d"]], smooth=False)
    assert strict.bleu[1] == 0.0


def test_bleu_worked_clipping_example():
    # hyp "the the the" vs ref "the cat":
    #   clipped unigram matches: min(3, 1) = 1 of 3 -> p1 = 1/3
    #   c = 3 >= r = 2 -> brevity penalty 1
    #   BLEU-1 = 100 * (1/3)
    hyps, refs = [["the", "the", "the"]], [["the", "cat"]]
    report = bleu(hyps, refs)
    assert report.precisions[1] == pytest.approx(1 / 3)
    assert report.brevity_penalty == 1.0
    assert report.bleu[1] == pytest.approx(_hand_bleu1(hyps, refs))
    assert report.bleu[1] == pytest.approx(100.0 / 3)


def test_bleu_brevity_penalty_applies_when_short():
    # hyp "the cat" vs ref "the cat sat": p1 = 2/2, c=2 < r=3
    report = bleu([["the", "cat"]], [["the", "cat", "sat"]])
    assert report.brevity_penalty == pytest.approx(math.exp(1 - 3 / 2))
    assert report.bleu[1] == pytest.approx(_hand_bleu1([["the", "cat"]],
                                                       [["the", "cat", "sat"]]))


def test_bleu_errors():
    with pytest.raises(LengthMismatch):
        bleu([["a"]], [["a"], ["b"]])
    with pytest.raises(EmptyCorpus):
        bleu([], [])


def test_bleu_monotone_orders_without_smoothing():
    hyps = [["the", "cat", "sat", "on", "the", "mat"]]
    refs = [["the", "cat", "sat", "on", "a", "mat"]]
    report = bleu(hyps, refs, smooth=False)
    vals = [report.bleu[n] for n in range(1, 5)]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(4))))
def test_bleu_permutation_invariant(order):
    hyps = [["a", "b"], ["c"], ["d", "e", "f"], ["a", "c"]]
    refs = [["a", "x"], ["c"], ["d", "f", "f"], ["b", "c"]]
    base = bleu(hyps, refs).bleu
    shuffled = bleu([hyps[i] for i in order], [refs[i] for i in order]).bleu
    assert all(base[n] == pytest.approx(shuffled[n]) for n in range(1, 5))


def test_kappa_perfect_agreement():
    result = cohen_kappa([(1, 1), (2, 2), (3, 3)])
    assert result.kappa == pytest.approx(1.0)
    assert not result.degenerate


def test_kappa_chance_level_is_zero():
    # p_o = 0.5 and p_e = 0.5 for this balanced table
    pairs = [("y", "y"), ("y", "n"), ("n", "y"), ("n", "n")]
    result = cohen_kappa(pairs)
    assert result.p_o == pytest.approx(result.p_e)
    assert result.kappa == pytest.approx(0.0)


def test_kappa_worked_contingency_table():
    # yes/yes=20, yes/no=5, no/yes=10, no/no=15 over 50 items:
    #   p_o = 35/50 = 0.7
    #   p_e = (25/50)(30/50) + (25/50)(20/50) = 0.3 + 0.2 = 0.5
    #   kappa = (0.7 - 0.5) / (1 - 0.5) = 0.4
    pairs = ([("y", "y")] * 20 + [("y", "n")] * 5 + [("n", "y")] * 10 + [("n", "n")] * 15)
    result = cohen_kappa(pairs)
    assert result.p_o == pytest.approx(0.7)
    assert result.p_e == pytest.approx(0.5)
    assert result.kappa == pytest.approx(0.4)
    assert result.n == 50


def test_kappa_degenerate_constant_raters():
    result = cohen_kappa([(1, 1), (1, 1)])
    assert result.degenerate and result.kappa == 1.0


def test_kappa_in_range_and_relabel_invariant():
    pairs = [(1, 2), (2, 2), (1, 1), (2, 1), (1, 2), (2, 2)]
    base = cohen_kappa(pairs)
    assert -1.0 <= base.kappa <= 1.0
    relabeled = cohen_kappa([(p[0] + 10, p[1] + 10) for p in pairs])
    assert relabeled.kappa == pytest.approx(base.kappa)


def _records():
    return [
        RatingRecord("m1", "r1", 3, 2, True),
        RatingRecord("m1", "r2", 4, 3, False),
        RatingRecord("m2", "r1", 2, 2, True),
        RatingRecord("m2", "r2", 2, 4, False),
    ]


def test_aggregate_disagreement_averages():
    summary = aggregate_ratings(_records())
    # m1 coherence (3+4)/2 = 3.5, m2 = 2.0 -> mean 2.75
    assert summary.mean_coherence == pytest.approx((3.5 + 2.0) / 2)
    assert summary.mean_relevance == pytest.approx((2.5 + 3.0) / 2)
    assert summary.likes_fraction == pytest.approx(0.5)
    assert summary.n_memes == 2


def test_aggregate_upper_bound():
    records = [RatingRecord("m", "a", 4, 4, True), RatingRecord("m", "b", 4, 4, True)]
    summary = aggregate_ratings(records)
    assert (summary.mean_coherence, summary.mean_relevance, summary.likes_fraction) == \
        (4.0, 4.0, 1.0)


def test_aggregate_order_invariant():
    a = aggregate_ratings(_records())
    b = aggregate_ratings(list(reversed(_records())))
    assert a == b


def test_aggregate_incomplete():
    with pytest.raises(IncompleteRatings, match="m3"):
        aggregate_ratings(_records() + [RatingRecord("m3", "r1", 1, 1, False)])


def test_rating_record_validation():
    with pytest.raises(ValueError):
        RatingRecord("m", "r", 5, 2, False)


def test_score_distribution():
    dist = score_distribution(_records())
    assert dist["coherence"] == {2.0: 1, 3.5: 1}
    assert sum(dist["coherence"].values()) == 2


def test_score_distribution_empty():
    dist = score_distribution([])
    assert dist == {"coherence": {}, "relevance": {}}


def test_load_ratings_csv(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("meme_id,rater_id,coherence,relevance,likes\n"
                    "m1,r1,3,2,1\nm1,r2,4,3,0\n")
    records = load_ratings(path)
    assert records[0] == RatingRecord("m1", "r1", 3, 2, True)
    assert rating_pairs(records, "coherence") == [(3, 4)]
