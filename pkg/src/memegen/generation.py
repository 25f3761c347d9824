"""Decoding (beam search / greedy) and the sentence -> template -> caption
-> composed image pipeline."""
from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .models import (CaptionGenerator, EmptyInput, MemeEmbedding,
                     batch_decoder_logits, encode_meme, select_template)
from .neural import log_softmax_np
from .text import BOS, EOS, TagLexicon, Vocabulary, mask_to_content, pos_tag, tokenize
from .corpus import TemplateCatalog, UnknownTemplate


@dataclass
class DecodeParams:
    beam_size: int = 6
    alpha: float = 0.7
    max_len: int = 32
    forced_template: int | None = None

    def __post_init__(self):
        if self.beam_size < 1 or self.alpha < 0 or self.max_len < 1:
            raise ValueError("invalid decode parameters")


@dataclass
class BeamHypothesis:
    ids: tuple[int, ...]        # BOS-prefixed
    log_prob: float
    finished: bool = False

    def caption_len(self) -> int:
        """Generated tokens after BOS, EOS included when finished."""
        return len(self.ids) - 1


def length_penalty(length: int, alpha: float) -> float:
    if length < 1:
        raise ValueError("length must be >= 1")
    return ((5.0 + length) / 6.0) ** alpha


def _ranked_score(hyp: BeamHypothesis, alpha: float) -> float:
    return hyp.log_prob / length_penalty(max(hyp.caption_len(), 1), alpha)


def beam_search(meme: MemeEmbedding, generator: CaptionGenerator,
                params: DecodeParams, banned_ids=()) -> tuple[list[int], float]:
    """Best token sequence (without BOS) and its length-normalized score.

    Keeps `beam_size` live hypotheses per step; EOS retires a hypothesis to
    the finished pool; final ranking divides cumulative log-probability by
    the length penalty. Fully deterministic: ties break on token ids.
    """
    max_len = min(params.max_len, generator.config.max_len)
    live = [BeamHypothesis((BOS,), 0.0)]
    finished: list[BeamHypothesis] = []

    for _ in range(max_len):
        logits = batch_decoder_logits([list(h.ids) for h in live], meme, generator)
        logp = log_softmax_np(logits)
        candidates = []
        for h, row in zip(live, logp):
            for tok in banned_ids:
                row[tok] = -np.inf
            # expanding every hypothesis by its top beam_size tokens is enough
            top = np.argsort(-row, kind="stable")[:params.beam_size]
            for tok in top:
                candidates.append(BeamHypothesis(h.ids + (int(tok),),
                                                 h.log_prob + float(row[tok])))
        candidates.sort(key=lambda h: (-h.log_prob, h.ids))
        live = []
        for cand in candidates:
            if cand.ids[-1] == EOS:
                cand.finished = True
                finished.append(cand)
            elif len(live) < params.beam_size:
                live.append(cand)
            if len(live) == params.beam_size and len(finished) >= params.beam_size:
                break
        if not live:
            break

    finished.extend(live)  # max-length leftovers compete unfinished
    best = min(finished, key=lambda h: (-_ranked_score(h, params.alpha), h.ids))
    return list(best.ids[1:]), _ranked_score(best, params.alpha)


def greedy_decode(meme: MemeEmbedding, generator: CaptionGenerator,
                  max_len: int = 32) -> list[int]:
    """Argmax chain from BOS until EOS or max_len tokens."""
    ids = [BOS]
    out = []
    for _ in range(min(max_len, generator.config.max_len)):
        logits = batch_decoder_logits([ids], meme, generator)[0]
        tok = int(np.argmax(logits))
        out.append(tok)
        ids.append(tok)
        if tok == EOS:
            break
    return out


@dataclass
class GeneratedMeme:
    sentence: str
    template_id: int
    selection_prob: float
    caption: str
    score: float
    image_path: str | None
    variant_index: int
    ranked_templates: list[tuple[int, float]]


def generate_meme(sentence: str, selector, generator: CaptionGenerator,
                  vocab: Vocabulary, catalog: TemplateCatalog, tags: TagLexicon,
                  params: DecodeParams, seed: int = 0, np_plus_v: bool = True,
                  out_path=None, font=None) -> GeneratedMeme:
    """Full pipeline; composites onto disk only when out_path is given."""
    if not sentence.strip():
        raise EmptyInput("empty sentence")

    ranked = [] if selector is None else select_template(sentence, selector, vocab, catalog)
    if params.forced_template is not None:
        if not 0 <= params.forced_template < len(catalog):
            raise UnknownTemplate(f"template id {params.forced_template} out of range")
        template_id = params.forced_template
        prob = next((p for t, p in ranked if t == template_id), 1.0)
    else:
        if not ranked:
            raise ValueError("no selector loaded and no forced template")
        template_id, prob = ranked[0]

    if generator.variant == "MT2MC":
        masked_ids = []
    else:
        tokens = tokenize(sentence)
        masked = mask_to_content(tokens, pos_tag(tokens, tags), keep_verbs=np_plus_v)
        masked_ids = vocab.encode(masked)
    meme = encode_meme(template_id, masked_ids, generator, vocab)
    caption_ids, score = beam_search(meme, generator, params)
    caption = vocab.decode(caption_ids)

    entry = catalog.entries[template_id]
    variant_index = random.Random(seed).randrange(len(entry.image_paths))
    image_path = None
    if out_path is not None:
        from .compositor import compose_meme
        compose_meme(entry, caption, variant_index, out_path, font=font)
        image_path = str(out_path)
    return GeneratedMeme(sentence, template_id, prob, caption, score,
                         image_path, variant_index, ranked)
