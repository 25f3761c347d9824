"""The two learners: the template-selection classifier and the conditioned
caption generator (MT2MC / SMT2MC), their training loops, and binary
checkpoint I/O."""
from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import neural
from .neural import (Adam, DecoderLayer, EncoderLayer, LrSchedule, ModelConfig,
                     Tensor, causal_bias, cross_entropy_loss, embedding,
                     lr_at, no_grad, padding_bias, sinusoidal_positions, softmax)
from .text import BOS, EOS, PAD, TagLexicon, Vocabulary, mask_to_content, pos_tag, tokenize

CHECKPOINT_MAGIC = b"MBCK"
CHECKPOINT_VERSION = 1

VARIANTS = ("MT2MC", "SMT2MC")


class VariantMismatch(ValueError):
    pass


class PrefixTooLong(ValueError):
    pass


class EmptyTrainSet(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


class CorruptFile(ValueError):
    pass


def pad_batch(seqs: list[list[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


class _Stack:
    """Shared embedding + sinusoidal positions feeding a layer stack."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        scale = config.d_model ** -0.5
        self.embed = Tensor(rng.normal(0.0, scale, (config.vocab_size, config.d_model)),
                            requires_grad=True)
        # positions sized for encoder inputs longer than decoder max_len
        self.positions = sinusoidal_positions(4 * config.max_len, config.d_model)

    def embed_ids(self, ids: np.ndarray) -> Tensor:
        x = embedding(self.embed, ids) * Tensor(math.sqrt(self.config.d_model))
        return x + Tensor(self.positions[:ids.shape[1]])


class TemplateSelector:
    """Transformer encoder + mean-pool over non-PAD positions + linear head
    producing a distribution over catalog templates."""

    def __init__(self, config: ModelConfig, num_templates: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.config = config
        self.num_templates = num_templates
        self.stack = _Stack(config, rng)
        self.layers = [EncoderLayer(config.d_model, config.d_ff, config.h, rng)
                       for _ in range(config.n_layers)]
        self.head = neural.Linear(config.d_model, num_templates, rng)
        self._drop_rng = np.random.default_rng(seed + 1)

    def forward(self, ids: np.ndarray, train: bool = False) -> Tensor:
        bias = padding_bias(ids, PAD)
        x = self.stack.embed_ids(ids)
        x = neural.dropout(x, self.config.p_drop, self._drop_rng, train)
        for layer in self.layers:
            x = layer(x, bias, self.config.p_drop, self._drop_rng, train)
        # masked mean pool via a constant weight row per sample
        valid = (ids != PAD).astype(neural.DTYPE)
        weights = valid / np.maximum(valid.sum(axis=1, keepdims=True), 1.0)
        pooled = Tensor(weights[:, None, :]) @ x  # (B, 1, d)
        pooled = pooled.reshape(ids.shape[0], self.config.d_model)
        return self.head(pooled)

    def named_parameters(self):
        params = {"embed": self.stack.embed}
        for i, layer in enumerate(self.layers):
            params.update(layer.named_parameters(f"enc{i}."))
        params.update(self.head.named_parameters("head."))
        return params


def select_template(sentence: str, selector: TemplateSelector, vocab: Vocabulary,
                    catalog) -> list[tuple[int, float]]:
    """Full distribution over the catalog, best first; ties broken by
    lower template id."""
    tokens = tokenize(sentence)
    if not tokens:
        raise EmptyInput("empty sentence")
    ids = np.array([vocab.encode(tokens)], dtype=np.int64)
    with no_grad():
        logits = selector.forward(ids, train=False)
        probs = softmax(logits).data[0].astype(float)
    ranked = sorted(range(len(catalog)), key=lambda i: (-probs[i], i))
    return [(i, float(probs[i])) for i in ranked]


class CaptionGenerator:
    """Encoder-decoder transformer. MT2MC encodes the template token alone;
    SMT2MC encodes template token ++ masked sentence tokens."""

    def __init__(self, config: ModelConfig, variant: str, seed: int = 0, tied: bool = True):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        rng = np.random.default_rng(seed)
        self.config = config
        self.variant = variant
        self.tied = tied
        self.stack = _Stack(config, rng)
        self.enc_layers = [EncoderLayer(config.d_model, config.d_ff, config.h, rng)
                           for _ in range(config.n_layers)]
        self.dec_layers = [DecoderLayer(config.d_model, config.d_ff, config.h, rng)
                           for _ in range(config.n_layers)]
        self.out_proj = None if tied else neural.Linear(config.d_model, config.vocab_size, rng)
        self._drop_rng = np.random.default_rng(seed + 1)

    def encode(self, src_ids: np.ndarray, train: bool = False) -> Tensor:
        bias = padding_bias(src_ids, PAD)
        x = self.stack.embed_ids(src_ids)
        x = neural.dropout(x, self.config.p_drop, self._drop_rng, train)
        for layer in self.enc_layers:
            x = layer(x, bias, self.config.p_drop, self._drop_rng, train)
        return x

    def decode(self, tgt_ids: np.ndarray, memory: Tensor, src_ids: np.ndarray,
               train: bool = False) -> Tensor:
        """All-position logits (B, T, V); self-attention is causal."""
        t = tgt_ids.shape[1]
        causal = causal_bias(t)
        mem_bias = padding_bias(src_ids, PAD)
        x = self.stack.embed_ids(tgt_ids)
        x = neural.dropout(x, self.config.p_drop, self._drop_rng, train)
        for layer in self.dec_layers:
            x = layer(x, memory, causal, mem_bias, self.config.p_drop,
                      self._drop_rng, train)
        if self.tied:
            return x @ self._embed_t()
        return self.out_proj(x)

    def _embed_t(self) -> Tensor:
        return self.stack.embed.transpose(1, 0)

    def named_parameters(self):
        params = {"embed": self.stack.embed}
        for i, layer in enumerate(self.enc_layers):
            params.update(layer.named_parameters(f"enc{i}."))
        for i, layer in enumerate(self.dec_layers):
            params.update(layer.named_parameters(f"dec{i}."))
        if self.out_proj is not None:
            params.update(self.out_proj.named_parameters("out."))
        return params


@dataclass
class MemeEmbedding:
    """Encoder output over [template token ++ masked sentence tokens]."""
    matrix: np.ndarray          # (source_len, d_model)
    src_ids: np.ndarray         # (source_len,) kept for cross-attention masking

    @property
    def source_len(self):
        return self.matrix.shape[0]


def encode_meme(template_id: int, masked_token_ids: list[int],
                generator: CaptionGenerator, vocab: Vocabulary) -> MemeEmbedding:
    """Run the encoder over the conditioning sequence for one meme."""
    tpl_vocab_id = 5 + template_id  # reserved block is ids 0..4
    if generator.variant == "MT2MC" and masked_token_ids:
        raise VariantMismatch("MT2MC conditions on the template token alone")
    src = np.array([[tpl_vocab_id] + list(masked_token_ids)], dtype=np.int64)
    with no_grad():
        memory = generator.encode(src, train=False)
    if not np.all(np.isfinite(memory.data)):
        raise neural.NonFinite("non-finite meme embedding")
    return MemeEmbedding(memory.data[0], src[0])


def decoder_logits(prefix_ids: list[int], meme: MemeEmbedding,
                   generator: CaptionGenerator) -> np.ndarray:
    """Next-token logits given a BOS-prefixed decoder prefix."""
    if not prefix_ids or prefix_ids[0] != BOS:
        raise ValueError("prefix must start with BOS")
    if len(prefix_ids) > generator.config.max_len:
        raise PrefixTooLong(f"prefix of {len(prefix_ids)} exceeds max_len "
                            f"{generator.config.max_len}")
    tgt = np.array([prefix_ids], dtype=np.int64)
    with no_grad():
        logits = generator.decode(tgt, Tensor(meme.matrix[None]), meme.src_ids[None])
    return logits.data[0, -1].astype(float)


def batch_decoder_logits(prefixes: list[list[int]], meme: MemeEmbedding,
                         generator: CaptionGenerator) -> np.ndarray:
    """Next-token logits for several equal-length prefixes of one meme."""
    tgt = np.array(prefixes, dtype=np.int64)
    b = tgt.shape[0]
    mem = np.broadcast_to(meme.matrix[None], (b,) + meme.matrix.shape)
    src = np.broadcast_to(meme.src_ids[None], (b, meme.src_ids.shape[0]))
    with no_grad():
        logits = generator.decode(tgt, Tensor(np.ascontiguousarray(mem)),
                                  np.ascontiguousarray(src))
    return logits.data[:, -1, :].astype(float)


# -- training --------------------------------------------------------------


@dataclass
class TrainSettings:
    lr: float = 1e-3
    eta_min: float = 1e-5
    t_0: int = 200
    t_mult: int = 2
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    clip_norm: float = 1.0


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float | None = None
    val_macro_f1: float | None = None


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    wall_clock_s: float = 0.0
    checkpoint_path: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _epoch_batches(items, batch_size, rng):
    order = list(range(len(items)))
    rng.shuffle(order)
    for i in range(0, len(order), batch_size):
        yield [items[j] for j in order[i:i + batch_size]]


def macro_f1(y_true, y_pred, num_classes) -> float:
    f1s = []
    for c in range(num_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / num_classes


def train_selector(split, config: ModelConfig, vocab: Vocabulary,
                   settings: TrainSettings, num_templates: int,
                   log=None) -> tuple[TemplateSelector, TrainReport]:
    if not split.train:
        raise EmptyTrainSet("selector training set is empty")
    t_start = time.time()
    model = TemplateSelector(config, num_templates, seed=settings.seed)
    params = model.named_parameters()
    opt = Adam(params.values(), lr=settings.lr)
    sched = LrSchedule(settings.lr, settings.eta_min, settings.t_0, settings.t_mult)
    shuffle_rng = np.random.default_rng(settings.seed + 7)

    encoded = [(vocab.encode(s.caption) or [PAD], s.template_id) for s in split.train]
    val = [(vocab.encode(s.caption) or [PAD], s.template_id) for s in split.validation]

    report = TrainReport()
    best_weights = None
    step = 0
    for epoch in range(settings.epochs):
        losses = []
        for batch in _epoch_batches(encoded, settings.batch_size, shuffle_rng):
            ids = pad_batch([b[0] for b in batch])
            labels = np.array([b[1] for b in batch], dtype=np.int64)
            opt.zero_grad()
            loss = cross_entropy_loss(model.forward(ids, train=True), labels)
            loss.backward()
            opt.clip_global_norm(settings.clip_norm)
            opt.step(lr_at(step, sched))
            step += 1
            losses.append(float(loss.data))
        val_loss, acc, f1 = _eval_selector(model, val or encoded, num_templates)
        stats = EpochStats(epoch, float(np.mean(losses)), val_loss, acc, f1)
        report.epochs.append(stats)
        if log:
            log(stats)
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_weights = {k: p.data.copy() for k, p in params.items()}
    if best_weights:
        for k, p in params.items():
            p.data = best_weights[k]
    report.wall_clock_s = time.time() - t_start
    return model, report


def _eval_selector(model, items, num_classes):
    if not items:
        return math.inf, 0.0, 0.0
    losses, y_true, y_pred = [], [], []
    with no_grad():
        for i in range(0, len(items), 64):
            chunk = items[i:i + 64]
            ids = pad_batch([c[0] for c in chunk])
            labels = np.array([c[1] for c in chunk], dtype=np.int64)
            logits = model.forward(ids, train=False)
            losses.append(float(cross_entropy_loss(logits, labels).data) * len(chunk))
            y_pred.extend(np.argmax(logits.data, axis=1).tolist())
            y_true.extend(labels.tolist())
    acc = sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)
    return sum(losses) / len(items), acc, macro_f1(y_true, y_pred, num_classes)


def generator_example(sample, vocab: Vocabulary, tags: TagLexicon, variant: str,
                      np_plus_v: bool, max_len: int):
    """(src_ids, tgt_in, tgt_out) for one training sample."""
    tpl_vocab_id = 5 + sample.template_id
    if variant == "MT2MC":
        src = [tpl_vocab_id]
    else:
        tokens = tokenize(sample.caption)
        masked = mask_to_content(tokens, pos_tag(tokens, tags), keep_verbs=np_plus_v)
        src = [tpl_vocab_id] + vocab.encode(masked)
    caption_ids = vocab.encode(sample.caption)[:max_len - 1]
    return src, [BOS] + caption_ids, caption_ids + [EOS]


def train_generator(split, variant: str, np_plus_v: bool, config: ModelConfig,
                    vocab: Vocabulary, tags: TagLexicon, settings: TrainSettings,
                    log=None) -> tuple[CaptionGenerator, TrainReport]:
    if not split.train:
        raise EmptyTrainSet("generator training set is empty")
    t_start = time.time()
    model = CaptionGenerator(config, variant, seed=settings.seed)
    params = model.named_parameters()
    opt = Adam(params.values(), lr=settings.lr)
    sched = LrSchedule(settings.lr, settings.eta_min, settings.t_0, settings.t_mult)
    shuffle_rng = np.random.default_rng(settings.seed + 7)

    def prep(samples):
        return [generator_example(s, vocab, tags, variant, np_plus_v, config.max_len)
                for s in samples]

    train_ex, val_ex = prep(split.train), prep(split.validation)

    report = TrainReport()
    best_weights = None
    step = 0
    for epoch in range(settings.epochs):
        losses = []
        for batch in _epoch_batches(train_ex, settings.batch_size, shuffle_rng):
            loss = _generator_batch_loss(model, batch, train=True)
            opt.zero_grad()
            loss.backward()
            opt.clip_global_norm(settings.clip_norm)
            opt.step(lr_at(step, sched))
            step += 1
            losses.append(float(loss.data))
        val_loss = _eval_generator(model, val_ex or train_ex)
        stats = EpochStats(epoch, float(np.mean(losses)), val_loss)
        report.epochs.append(stats)
        if log:
            log(stats)
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_weights = {k: p.data.copy() for k, p in params.items()}
    if best_weights:
        for k, p in params.items():
            p.data = best_weights[k]
    report.wall_clock_s = time.time() - t_start
    return model, report


def _generator_batch_loss(model, batch, train: bool):
    src = pad_batch([b[0] for b in batch])
    tgt_in = pad_batch([b[1] for b in batch])
    tgt_out = pad_batch([b[2] for b in batch])
    memory = model.encode(src, train=train)
    logits = model.decode(tgt_in, memory, src, train=train)
    flat = logits.reshape(tgt_out.size, model.config.vocab_size)
    return cross_entropy_loss(flat, tgt_out.reshape(-1), ignore_id=PAD)


def _eval_generator(model, examples):
    if not examples:
        return math.inf
    total, count = 0.0, 0
    with no_grad():
        for i in range(0, len(examples), 64):
            chunk = examples[i:i + 64]
            total += float(_generator_batch_loss(model, chunk, train=False).data) * len(chunk)
            count += len(chunk)
    return total / count


def teacher_forced_accuracy(model, examples) -> float:
    """Fraction of non-PAD target positions predicted exactly."""
    hits, total = 0, 0
    with no_grad():
        for i in range(0, len(examples), 64):
            chunk = examples[i:i + 64]
            src = pad_batch([b[0] for b in chunk])
            tgt_in = pad_batch([b[1] for b in chunk])
            tgt_out = pad_batch([b[2] for b in chunk])
            logits = model.decode(tgt_in, model.encode(src), src)
            pred = np.argmax(logits.data, axis=-1)
            valid = tgt_out != PAD
            hits += int((pred[valid] == tgt_out[valid]).sum())
            total += int(valid.sum())
    return hits / total if total else 0.0


# -- checkpoint I/O ----------------------------------------------------------


def _header_for(model, vocab: Vocabulary, meta: dict | None) -> dict:
    cfg = model.config
    header = {
        "kind": "selector" if isinstance(model, TemplateSelector) else "generator",
        "config": {"n_layers": cfg.n_layers, "d_model": cfg.d_model, "d_ff": cfg.d_ff,
                   "h": cfg.h, "p_drop": cfg.p_drop, "vocab_size": cfg.vocab_size,
                   "max_len": cfg.max_len},
        "vocab": vocab.tokens,
        "meta": meta or {},
    }
    if isinstance(model, TemplateSelector):
        header["num_templates"] = model.num_templates
    else:
        header["variant"] = model.variant
        header["tied"] = model.tied
    return header


def save_checkpoint(model, vocab: Vocabulary, path, meta: dict | None = None):
    header = json.dumps(_header_for(model, vocab, meta)).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        for name, p in model.named_parameters().items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (model, vocab, meta)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptFile("bad magic")
    try:
        version, hlen = struct.unpack_from("<II", blob, 4)
    except struct.error:
        raise CorruptFile("truncated header") from None
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    off = 12
    if off + hlen > len(blob):
        raise CorruptFile("truncated header")
    header = json.loads(blob[off:off + hlen].decode("utf-8"))
    off += hlen

    cfg = ModelConfig(**header["config"])
    vocab = Vocabulary(header["vocab"])
    if header["kind"] == "selector":
        model = TemplateSelector(cfg, header["num_templates"])
    else:
        model = CaptionGenerator(cfg, header["variant"], tied=header["tied"])
    params = model.named_parameters()

    seen = set()
    while off < len(blob):
        try:
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            payload = blob[off:off + 4 * count]
            if len(payload) != 4 * count:
                raise CorruptFile(f"truncated tensor {name!r}")
            off += 4 * count
        except struct.error:
            raise CorruptFile("truncated tensor record") from None
        if name not in params:
            raise CorruptFile(f"unexpected tensor {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        if arr.shape != params[name].data.shape:
            raise CorruptFile(f"tensor {name!r} shape {arr.shape} != {params[name].data.shape}")
        params[name].data = arr.copy()
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CorruptFile(f"missing tensors: {sorted(missing)[:3]}")
    return model, vocab, header.get("meta", {})
