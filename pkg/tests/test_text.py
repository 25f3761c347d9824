import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memegen.corpus import MemeSample
from memegen.text import (BOS, EOS, InvalidId, LengthMismatch, PAD, RESERVED,
                          TagLexicon, Vocabulary, build_vocab, mask_to_content,
                          pos_tag, tokenize)


def test_tokenize_basic():
    assert tokenize("Please save the world from Corona") == \
        ["please", "save", "the", "world", "from", "corona"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_punctuation():
    assert tokenize("Hello, world!") == ["hello", "world"]
    assert tokenize("...!!!") == []


def test_build_vocab_floor(catalog):
    vocab = build_vocab([], catalog, min_freq=1)
    assert len(vocab) == 5 + len(catalog)
    assert vocab.tokens[:5] == RESERVED


def test_build_vocab_min_freq(catalog):
    vocab = build_vocab([MemeSample(0, "a a b")], catalog, min_freq=2)
    assert "a" in vocab.index
    assert "b" not in vocab.index


def test_build_vocab_deterministic(samples, catalog):
    a = build_vocab(samples, catalog, 1)
    b = build_vocab(samples, catalog, 1)
    assert a.tokens == b.tokens


def test_vocab_roundtrip_file(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    assert Vocabulary.load(path).tokens == vocab.tokens


def test_encode_decode_roundtrip(vocab):
    text = "when you win your first fortnite game"
    assert vocab.decode(vocab.encode(text)) == text


def test_encode_oov(vocab):
    ids = vocab.encode("zzzunknownzzz")
    assert ids == [vocab.index["<unk>"]]


def test_decode_drops_specials(vocab):
    hi = vocab.encode("game")[0]
    assert vocab.decode([BOS, hi, EOS, PAD]) == "game"


def test_decode_invalid_id(vocab):
    with pytest.raises(InvalidId):
        vocab.decode([len(vocab) + 10])


LEX = TagLexicon(
    words={"dogs": "NOUN", "run": "VERB", "the": "DET", "big": "ADJ",
           "quickly": "ADV", "very": "ADV", "a": "DET"},
    suffixes=[("ly", "ADV"), ("ing", "VERB")],
)


def test_pos_tag_lookup():
    assert pos_tag(["dogs", "run"], LEX) == ["NOUN", "VERB"]


def test_pos_tag_default_noun():
    assert pos_tag(["flibbertigibbet"], LEX) == ["NOUN"]


def test_pos_tag_suffix():
    assert pos_tag(["slowly"], LEX) == ["ADV"]
    assert pos_tag(["jumping"], LEX) == ["VERB"]


def test_pos_tag_exact_beats_suffix():
    # "quickly" is in the word table, which outranks the "ly" rule
    assert LEX.tag("quickly") == "ADV"


def test_mask_keeps_nouns_and_verbs():
    tokens = ["the", "dogs", "run", "quickly"]
    tags = ["DET", "NOUN", "VERB", "ADV"]
    assert mask_to_content(tokens, tags) == ["dogs", "run"]


def test_mask_adjacent_adjective():
    assert mask_to_content(["big", "dogs"], ["ADJ", "NOUN"]) == ["big", "dogs"]


def test_mask_np_only_drops_verbs():
    tokens = ["dogs", "run"]
    tags = ["NOUN", "VERB"]
    assert mask_to_content(tokens, tags, keep_verbs=False) == ["dogs"]


def test_mask_empty_result_guard():
    tokens = ["the", "a", "the"]
    tags = ["DET", "DET", "DET"]
    assert mask_to_content(tokens, tags) == tokens


def test_mask_length_mismatch():
    with pytest.raises(LengthMismatch):
        mask_to_content(["a"], ["DET", "DET"])


def _is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet="abcdefgly", min_size=1, max_size=8), max_size=10))
def test_mask_output_is_subsequence(words):
    tags = pos_tag(words, LEX)
    masked = mask_to_content(words, tags)
    assert _is_subsequence(masked, words) or masked == words


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["dogs", "run", "the", "big", "quickly"]), min_size=1, max_size=10))
def test_mask_idempotent_when_guard_quiet(words):
    tags = pos_tag(words, LEX)
    once = mask_to_content(words, tags)
    if once != words or all(t in ("NOUN", "PROPN", "NUM", "VERB", "ADJ") for t in tags):
        twice = mask_to_content(once, pos_tag(once, LEX))
        assert twice == once
