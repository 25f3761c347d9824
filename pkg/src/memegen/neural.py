"""Minimal numerical core: float32 tensors with reverse-mode gradients,
the layers the two models need, losses, Adam, and the cosine-restart
learning-rate schedule.

Everything is numpy underneath. Graphs are built eagerly; call
``backward()`` on a scalar loss. Wrap inference in ``no_grad()`` to skip
graph construction.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

DTYPE = np.float32

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class NonFinite(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.astype(DTYPE, copy=False)


class Tensor:
    """Dense row-major float32 tensor, node of a reverse-mode tape."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_hi")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad and _grad_enabled
        self._backward = None
        self._prev = ()
        self._hi = None  # optional float64 scalar, set by loss ops

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ----------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._prev = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._prev:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._result(data, (self, other), backward)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (other * -1.0)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._result(data, (self, other), backward)

    __rmul__ = __mul__

    def matmul(self, other):
        """Batched matrix product over the last two axes."""
        data = np.matmul(self.data, other.data)

        def backward(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.shape))

        return Tensor._result(data, (self, other), backward)

    __matmul__ = matmul

    def reshape(self, *shape):
        data = self.data.reshape(shape)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(self.shape))

        return Tensor._result(data, (self,), backward)

    def transpose(self, *axes):
        data = self.data.transpose(axes)
        inv = np.argsort(axes)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inv))

        return Tensor._result(data, (self,), backward)

    def relu(self):
        mask = self.data > 0
        data = self.data * mask

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * mask)

        return Tensor._result(data, (self,), backward)

    def sum(self):
        data = np.array(self.data.sum(), dtype=DTYPE)

        def backward(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, g))

        return Tensor._result(data, (self,), backward)


def softmax(x):
    """Stable softmax along the last axis. Accepts Tensor or array."""
    is_tensor = isinstance(x, Tensor)
    xd = x.data if is_tensor else np.asarray(x, dtype=DTYPE)
    if not np.all(np.isfinite(xd)):
        raise NonFinite("softmax input contains NaN/Inf")
    shifted = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    if not is_tensor:
        return out

    def backward(g):
        if x.requires_grad:
            inner = (g * out).sum(axis=-1, keepdims=True)
            x._accumulate((g - inner) * out)

    return Tensor._result(out, (x,), backward)


def log_softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def scaled_dot_product_attention(q, k, v, mask=None):
    """softmax(Q Kᵀ / √d_k) V for 2-D Q:(m,d_k), K:(n,d_k), V:(n,d_v).

    `mask` is boolean (m, n), True where attending is allowed. Masked
    positions get zero weight; a fully-masked row yields a zero output row.
    """
    q = q if isinstance(q, Tensor) else Tensor(q)
    k = k if isinstance(k, Tensor) else Tensor(k)
    v = v if isinstance(v, Tensor) else Tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"attention shapes {q.shape} {k.shape} {v.shape}")
    d_k = q.shape[-1]
    scores = q @ k.transpose(1, 0) * Tensor(1.0 / math.sqrt(d_k))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != scores.shape:
            raise ShapeMismatch(f"mask shape {mask.shape} vs scores {scores.shape}")
        bias = np.where(mask, 0.0, -1e9).astype(DTYPE)
        scores = scores + Tensor(bias)
    weights = softmax(scores)
    if mask is not None:
        # fully-masked rows come out uniform from the -1e9 bias; zero them
        alive = mask.any(axis=-1, keepdims=True).astype(DTYPE)
        weights = weights * Tensor(alive)
    return weights @ v


def embedding(table: Tensor, ids: np.ndarray):
    """Row gather: table (V, d), ids int array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            grad = np.zeros_like(table.data)
            np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            table._accumulate(grad)

    return Tensor._result(data, (table,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        n = x.shape[-1]
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if x.requires_grad:
            gx = g * gamma.data
            dxhat = gx * inv
            mean_d = dxhat.mean(axis=-1, keepdims=True)
            mean_dx = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(dxhat - mean_d - xhat * mean_dx)

    return Tensor._result(data, (x, gamma, beta), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool):
    """Inverted dropout: surviving activations scaled by 1/(1-p)."""
    if not train or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(DTYPE) / (1.0 - p)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep)

    return Tensor._result(x.data * keep, (x,), backward)


def cross_entropy_loss(logits: Tensor, targets, ignore_id=None):
    """Mean NLL of softmax(logits) at `targets`, skipping ignore_id rows.

    logits: (n, V); targets: n integer ids.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    valid = np.ones_like(targets, dtype=bool) if ignore_id is None else targets != ignore_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyBatch("all target positions are ignored")
    logp = log_softmax_np(logits.data.astype(np.float64))
    rows = np.arange(len(targets))
    picked = np.where(valid, logp[rows, np.clip(targets, 0, logits.shape[1] - 1)], 0.0)
    loss = -picked.sum() / n_valid

    def backward(g):
        if logits.requires_grad:
            probs = np.exp(logp)
            probs[rows[valid], targets[valid]] -= 1.0
            probs[~valid] = 0.0
            logits._accumulate((g * probs / n_valid).astype(DTYPE))

    out = Tensor._result(np.array(loss, dtype=DTYPE), (logits,), backward)
    out._hi = float(loss)  # float64 readout for the finite-difference oracle
    return out


# -- layers ----------------------------------------------------------------


class Linear:
    def __init__(self, d_in, d_out, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(d_in)
        self.w = Tensor(rng.uniform(-bound, bound, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x):
        return x @ self.w + self.b

    def named_parameters(self, prefix=""):
        return {prefix + "w": self.w, prefix + "b": self.b}


class LayerNorm:
    def __init__(self, dim, eps=1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)

    def named_parameters(self, prefix=""):
        return {prefix + "gamma": self.gamma, prefix + "beta": self.beta}


class MultiHeadAttention:
    """Multi-head scaled dot-product attention over (B, L, d) activations.

    `mask_bias` is an additive float array broadcastable to
    (B, h, L_q, L_k): 0 where attending is allowed, -1e9 where not.
    """

    def __init__(self, d_model, h, rng):
        assert d_model % h == 0
        self.h = h
        self.d_k = d_model // h
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def __call__(self, q_in, k_in, v_in, mask_bias=None):
        b, lq, d = q_in.shape
        lk = k_in.shape[1]

        def split(x, l):
            return x.reshape(b, l, self.h, self.d_k).transpose(0, 2, 1, 3)

        q = split(self.wq(q_in), lq)
        k = split(self.wk(k_in), lk)
        v = split(self.wv(v_in), lk)
        scores = q @ k.transpose(0, 1, 3, 2) * Tensor(1.0 / math.sqrt(self.d_k))
        if mask_bias is not None:
            scores = scores + Tensor(mask_bias)
        out = softmax(scores) @ v
        out = out.transpose(0, 2, 1, 3).reshape(b, lq, d)
        return self.wo(out)

    def named_parameters(self, prefix=""):
        p = {}
        for name, lin in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)):
            p.update(lin.named_parameters(f"{prefix}{name}."))
        return p


class FeedForward:
    def __init__(self, d_model, d_ff, rng):
        self.lin1 = Linear(d_model, d_ff, rng)
        self.lin2 = Linear(d_ff, d_model, rng)

    def __call__(self, x):
        return self.lin2(self.lin1(x).relu())

    def named_parameters(self, prefix=""):
        return {**self.lin1.named_parameters(prefix + "lin1."),
                **self.lin2.named_parameters(prefix + "lin2.")}


class EncoderLayer:
    """Post-norm: residual add, then layer norm."""

    def __init__(self, d_model, d_ff, h, rng):
        self.attn = MultiHeadAttention(d_model, h, rng)
        self.ff = FeedForward(d_model, d_ff, rng)
        self.norm1 = LayerNorm(d_model)
        self.norm2 = LayerNorm(d_model)

    def __call__(self, x, mask_bias, p_drop, rng, train):
        x = self.norm1(x + dropout(self.attn(x, x, x, mask_bias), p_drop, rng, train))
        x = self.norm2(x + dropout(self.ff(x), p_drop, rng, train))
        return x

    def named_parameters(self, prefix=""):
        return {**self.attn.named_parameters(prefix + "attn."),
                **self.ff.named_parameters(prefix + "ff."),
                **self.norm1.named_parameters(prefix + "norm1."),
                **self.norm2.named_parameters(prefix + "norm2.")}


class DecoderLayer:
    def __init__(self, d_model, d_ff, h, rng):
        self.self_attn = MultiHeadAttention(d_model, h, rng)
        self.cross_attn = MultiHeadAttention(d_model, h, rng)
        self.ff = FeedForward(d_model, d_ff, rng)
        self.norm1 = LayerNorm(d_model)
        self.norm2 = LayerNorm(d_model)
        self.norm3 = LayerNorm(d_model)

    def __call__(self, x, memory, causal_bias, mem_bias, p_drop, rng, train):
        x = self.norm1(x + dropout(self.self_attn(x, x, x, causal_bias), p_drop, rng, train))
        x = self.norm2(x + dropout(self.cross_attn(x, memory, memory, mem_bias), p_drop, rng, train))
        x = self.norm3(x + dropout(self.ff(x), p_drop, rng, train))
        return x

    def named_parameters(self, prefix=""):
        return {**self.self_attn.named_parameters(prefix + "self_attn."),
                **self.cross_attn.named_parameters(prefix + "cross_attn."),
                **self.ff.named_parameters(prefix + "ff."),
                **self.norm1.named_parameters(prefix + "norm1."),
                **self.norm2.named_parameters(prefix + "norm2."),
                **self.norm3.named_parameters(prefix + "norm3.")}


def sinusoidal_positions(max_len, d_model):
    pos = np.arange(max_len)[:, None].astype(np.float64)
    i = np.arange(d_model)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    enc = np.zeros((max_len, d_model))
    enc[:, 0::2] = np.sin(angles[:, 0::2])
    enc[:, 1::2] = np.cos(angles[:, 1::2])
    return enc.astype(DTYPE)


def causal_bias(n):
    """(1, 1, n, n) additive bias: -1e9 above the diagonal."""
    mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    return np.where(mask, -1e9, 0.0).astype(DTYPE)[None, None]


def padding_bias(ids: np.ndarray, pad_id: int):
    """(B, 1, 1, L) additive bias hiding PAD key positions."""
    return np.where(ids == pad_id, -1e9, 0.0).astype(DTYPE)[:, None, None, :]


@dataclass
class ModelConfig:
    n_layers: int
    d_model: int
    d_ff: int
    h: int
    p_drop: float
    vocab_size: int
    max_len: int = 32

    def __post_init__(self):
        if self.d_model % self.h != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by h {self.h}")
        if not (0.0 <= self.p_drop < 1.0):
            raise ValueError(f"p_drop {self.p_drop} outside [0, 1)")
        for name in ("n_layers", "d_model", "d_ff", "h", "vocab_size", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# -- optimizer & schedule --------------------------------------------------


class Adam:
    """Bias-corrected Adam; defaults match the training setup
    (beta1=0.9, beta2=0.98, eps=1e-9)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.98, eps=1e-9):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def clip_global_norm(self, max_norm=1.0):
        total = math.sqrt(sum(float((p.grad ** 2).sum()) for p in self.params if p.grad is not None))
        if total > max_norm:
            scale = max_norm / (total + 1e-12)
            for p in self.params:
                if p.grad is not None:
                    p.grad *= scale
        return total

    def step(self, lr_t=None):
        if lr_t is None:
            lr_t = self.lr
        if lr_t < 0:
            raise ValueError("negative learning rate")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeMismatch(f"grad {g.shape} vs param {p.data.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / b1c
            vhat = self.v[i] / b2c
            p.data -= (lr_t * mhat / (np.sqrt(vhat) + self.eps)).astype(DTYPE)


@dataclass
class LrSchedule:
    """Cosine annealing with warm restarts."""
    eta_max: float
    eta_min: float = 0.0
    t_0: int = 100
    t_mult: int = 1

    def __post_init__(self):
        if not (self.eta_max >= self.eta_min >= 0):
            raise ValueError("need eta_max >= eta_min >= 0")
        if self.t_0 < 1 or self.t_mult < 1:
            raise ValueError("need t_0 >= 1 and t_mult >= 1")


def lr_at(step: int, schedule: LrSchedule) -> float:
    """eta_min + (eta_max-eta_min)(1+cos(pi*t_cur/t_i))/2, restarting
    with the period multiplied by t_mult each time it completes."""
    if step < 0:
        raise ValueError("step must be >= 0")
    t_cur, t_i = step, schedule.t_0
    while t_cur >= t_i:
        t_cur -= t_i
        t_i *= schedule.t_mult
    cos = math.cos(math.pi * t_cur / t_i)
    return schedule.eta_min + 0.5 * (schedule.eta_max - schedule.eta_min) * (1.0 + cos)


# -- finite-difference oracle ---------------------------------------------


def _scalar(t: Tensor) -> float:
    return t._hi if t._hi is not None else float(t.data)


def grad_check(fn, params, step=1e-3):
    """Max error between analytic gradients of scalar `fn()` and central
    differences over every element of `params`, relative to the overall
    gradient magnitude (some parameters, e.g. attention key biases, have
    exactly-zero gradients, so elementwise ratios are meaningless).

    `fn` must rebuild its graph from the live `params` each call.
    """
    for p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = [np.zeros_like(a, dtype=np.float64) for a in analytic]
    for p, num in zip(params, numeric):
        flat = p.data.reshape(-1)
        nflat = num.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            with no_grad():
                up = _scalar(fn())
            flat[idx] = orig - step
            with no_grad():
                down = _scalar(fn())
            flat[idx] = orig
            nflat[idx] = (up - down) / (2.0 * step)
    scale = max(max(float(np.abs(a).max(initial=0.0)) for a in analytic),
                max(float(np.abs(n).max(initial=0.0)) for n in numeric),
                1e-6)
    return max(float(np.abs(a - n).max(initial=0.0)) / scale
               for a, n in zip(analytic, numeric))
