"""Minimal differentiable numeric kernel.

Dense, 1-D temporal convolution, layer-norm, and multi-head attention
blocks with explicit forward and backward functions, a central-difference
gradient checker, and a binary checkpoint format. Training math runs in
float64; checkpoints persist float32.

All kernels are pure functions of their inputs plus an explicit seed, so
they are safe to call concurrently on disjoint data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError, FormatError, NumericError, ShapeError

ACTIVATIONS = ("linear", "relu", "tanh")

LN_EPS = 1e-8


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax (max-subtraction) along `axis`."""
    m = logits.max(axis=axis, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=axis, keepdims=True)


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return pre
    if activation == "relu":
        return np.maximum(0.0, pre)
    if activation == "tanh":
        return np.tanh(pre)
    raise ConfigError(f"unknown activation {activation!r}")


def _activate_bwd(grad: np.ndarray, pre: np.ndarray, post: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return grad
    if activation == "relu":
        return grad * (pre > 0)
    if activation == "tanh":
        return grad * (1.0 - post * post)
    raise ConfigError(f"unknown activation {activation!r}")


def dropout_mask(shape: tuple[int, ...], rate: float, rng_seed: int) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability `rate`, else 1/(1-rate).

    Deterministic in `rng_seed`. Rate 0 returns an all-ones mask so the op
    is bit-exact identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0,1), got {rate}")
    if rate == 0.0:
        return np.ones(shape, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed) & 0xFFFFFFFFFFFFFFFF]))
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    """Row-wise layer norm over the last axis. Returns (out, cache)."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * gamma + beta, (xhat, inv)


def layer_norm_bwd(grad: np.ndarray, cache, gamma: np.ndarray):
    """Backward of layer_norm. Returns (grad_x, grad_gamma, grad_beta)."""
    xhat, inv = cache
    reduce_axes = tuple(range(grad.ndim - 1))
    grad_gamma = (grad * xhat).sum(axis=reduce_axes)
    grad_beta = grad.sum(axis=reduce_axes)
    gh = grad * gamma
    grad_x = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
    return grad_x, grad_gamma, grad_beta


class DenseLayer:
    """Affine transform + nonlinearity + optional inverted dropout.

    Weights are (in_dim, out_dim) with a row-vector input convention:
    out = act(x @ w + b).
    """

    kind = "dense"

    def __init__(self, w: np.ndarray, b: np.ndarray, activation: str = "linear", dropout_rate: float = 0.0):
        w = _as_f64(w)
        b = _as_f64(b)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ShapeError(f"dense weights {w.shape} and bias {b.shape} are inconsistent")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0,1), got {dropout_rate}")
        self.w = w
        self.b = b
        self.activation = activation
        self.dropout_rate = float(dropout_rate)

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator,
             activation: str = "linear", dropout_rate: float = 0.0) -> "DenseLayer":
        scale = np.sqrt(2.0 / (in_dim + out_dim))
        w = rng.normal(0.0, scale, size=(in_dim, out_dim))
        return cls(w, np.zeros(out_dim), activation, dropout_rate)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray, train_mode: bool = False, rng_seed: int = 0,
                mask: np.ndarray | None = None):
        """Returns (out, cache). x is (batch, in_dim) or (in_dim,).

        In train_mode a dropout mask is sampled deterministically from
        rng_seed (or taken from `mask`) and applied with inverted scaling.
        """
        x = _as_f64(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"input dim {x.shape[1]} does not match weight input dim {self.w.shape[0]}")
        pre = x @ self.w + self.b
        post = _activate(pre, self.activation)
        if train_mode:
            if mask is None:
                mask = dropout_mask(post.shape, self.dropout_rate, rng_seed)
            out = post * mask
        else:
            mask = None
            out = post
        if squeeze:
            out = out[0]
        return out, (x, pre, post, mask, squeeze)

    def backward(self, grad: np.ndarray, cache):
        """Returns ([grad_w, grad_b], grad_x)."""
        x, pre, post, mask, squeeze = cache
        grad = _as_f64(grad)
        if squeeze:
            grad = grad[None, :]
        if mask is not None:
            grad = grad * mask
        grad_pre = _activate_bwd(grad, pre, post, self.activation)
        grad_w = x.T @ grad_pre
        grad_b = grad_pre.sum(axis=0)
        grad_x = grad_pre @ self.w.T
        if squeeze:
            grad_x = grad_x[0]
        return [grad_w, grad_b], grad_x

    def to_record(self):
        meta = {"activation": self.activation, "dropout_rate": self.dropout_rate}
        return self.kind, meta, [self.w, self.b]

    @classmethod
    def from_record(cls, meta, tensors) -> "DenseLayer":
        w, b = tensors
        return cls(w, b, meta["activation"], meta["dropout_rate"])


class Conv1dLayer:
    """1-D temporal convolution with 'same' zero padding (odd kernel).

    Input (batch, in_ch, T) -> output (batch, out_ch, T); weight is
    (out_ch, in_ch, k).
    """

    kind = "conv1d"

    def __init__(self, w: np.ndarray, b: np.ndarray, activation: str = "relu"):
        w = _as_f64(w)
        b = _as_f64(b)
        if w.ndim != 3 or w.shape[2] % 2 != 1:
            raise ShapeError(f"conv weight must be (out,in,k) with odd k, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv bias {b.shape} does not match out channels {w.shape[0]}")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.w = w
        self.b = b
        self.activation = activation

    @classmethod
    def init(cls, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
             activation: str = "relu") -> "Conv1dLayer":
        scale = np.sqrt(2.0 / (in_ch * kernel + out_ch))
        w = rng.normal(0.0, scale, size=(out_ch, in_ch, kernel))
        return cls(w, np.zeros(out_ch), activation)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def _cols(self, x: np.ndarray) -> np.ndarray:
        # (B, C, T) -> (B, T, C*k) with zero 'same' padding.
        k = self.w.shape[2]
        pad = k // 2
        t = x.shape[2]
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        cols = np.stack([xp[:, :, i:i + t] for i in range(k)], axis=3)  # (B, C, T, k)
        return cols.transpose(0, 2, 1, 3).reshape(x.shape[0], t, -1)

    def forward(self, x: np.ndarray):
        """Returns (out, cache). x is (batch, in_ch, T)."""
        x = _as_f64(x)
        if x.ndim != 3 or x.shape[1] != self.w.shape[1]:
            raise ShapeError(f"conv input {x.shape} does not match weight {self.w.shape}")
        cols = self._cols(x)
        w_flat = self.w.reshape(self.w.shape[0], -1)  # (out, C*k)
        pre = cols @ w_flat.T + self.b  # (B, T, out)
        post = _activate(pre, self.activation)
        return post.transpose(0, 2, 1), (x, cols, pre, post)

    def backward(self, grad: np.ndarray, cache):
        x, cols, pre, post = cache
        b_sz, _, t = x.shape
        out_ch, in_ch, k = self.w.shape
        grad = _as_f64(grad).transpose(0, 2, 1)  # (B, T, out)
        grad_pre = _activate_bwd(grad, pre, post, self.activation)
        w_flat = self.w.reshape(out_ch, -1)
        grad_w = np.tensordot(grad_pre, cols, axes=([0, 1], [0, 1])).reshape(out_ch, in_ch, k)
        grad_b = grad_pre.sum(axis=(0, 1))
        grad_cols = (grad_pre @ w_flat).reshape(b_sz, t, in_ch, k).transpose(0, 2, 1, 3)
        pad = k // 2
        grad_xp = np.zeros((b_sz, in_ch, t + 2 * pad))
        for i in range(k):
            grad_xp[:, :, i:i + t] += grad_cols[:, :, :, i]
        grad_x = grad_xp[:, :, pad:pad + t]
        return [grad_w, grad_b], grad_x

    def to_record(self):
        return self.kind, {"activation": self.activation}, [self.w, self.b]

    @classmethod
    def from_record(cls, meta, tensors) -> "Conv1dLayer":
        w, b = tensors
        return cls(w, b, meta["activation"])


class LayerNormLayer:
    """Standalone layer-norm with learnable affine."""

    kind = "layer-norm"

    def __init__(self, gamma: np.ndarray, beta: np.ndarray):
        gamma = _as_f64(gamma)
        beta = _as_f64(beta)
        if gamma.shape != beta.shape or gamma.ndim != 1:
            raise ShapeError("layer-norm gamma/beta must be matching vectors")
        self.gamma = gamma
        self.beta = beta

    @classmethod
    def init(cls, dim: int) -> "LayerNormLayer":
        return cls(np.ones(dim), np.zeros(dim))

    @property
    def params(self) -> list[np.ndarray]:
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray):
        x = _as_f64(x)
        if x.shape[-1] != self.gamma.shape[0]:
            raise ShapeError(f"layer-norm dim {self.gamma.shape[0]} does not match input {x.shape}")
        return layer_norm(x, self.gamma, self.beta)

    def backward(self, grad: np.ndarray, cache):
        grad_x, grad_gamma, grad_beta = layer_norm_bwd(grad, cache, self.gamma)
        return [grad_gamma, grad_beta], grad_x

    def to_record(self):
        return self.kind, {}, [self.gamma, self.beta]

    @classmethod
    def from_record(cls, meta, tensors) -> "LayerNormLayer":
        gamma, beta = tensors
        return cls(gamma, beta)


class AttentionBlock:
    """Multi-head scaled dot-product attention + residual + layer norm,
    then a position-wise feedforward + residual + layer norm.

    Token order carries no meaning: there is no positional encoding, so
    permuting input rows permutes output rows identically. Output shape
    equals input shape.
    """

    kind = "attention-block"

    def __init__(self, wq, wk, wv, wo, ln1: LayerNormLayer, w1, b1, w2, b2,
                 ln2: LayerNormLayer, heads: int):
        self.wq, self.wk, self.wv, self.wo = (_as_f64(a) for a in (wq, wk, wv, wo))
        dim = self.wq.shape[0]
        for name, w in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)):
            if w.shape != (dim, dim):
                raise ShapeError(f"attention {name} must be ({dim},{dim}), got {w.shape}")
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"token dim {dim} not divisible by head count {heads}")
        self.ln1 = ln1
        self.w1, self.b1, self.w2, self.b2 = (_as_f64(a) for a in (w1, b1, w2, b2))
        self.ln2 = ln2
        self.heads = heads

    @classmethod
    def init(cls, dim: int, heads: int, rng: np.random.Generator, ff_mult: int = 4) -> "AttentionBlock":
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"token dim {dim} not divisible by head count {heads}")
        scale = np.sqrt(1.0 / dim)
        proj = lambda: rng.normal(0.0, scale, size=(dim, dim))
        hidden = ff_mult * dim
        w1 = rng.normal(0.0, np.sqrt(2.0 / (dim + hidden)), size=(dim, hidden))
        w2 = rng.normal(0.0, np.sqrt(2.0 / (dim + hidden)), size=(hidden, dim))
        return cls(proj(), proj(), proj(), proj(), LayerNormLayer.init(dim),
                   w1, np.zeros(hidden), w2, np.zeros(dim), LayerNormLayer.init(dim), heads)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.wq, self.wk, self.wv, self.wo, *self.ln1.params,
                self.w1, self.b1, self.w2, self.b2, *self.ln2.params]

    def forward(self, tokens: np.ndarray):
        """Single sequence (num_tokens, token_dim) -> same shape. Returns (out, cache)."""
        tokens = _as_f64(tokens)
        if tokens.ndim != 2:
            raise ShapeError(f"tokens must be 2-D, got shape {tokens.shape}")
        out, cache = self.forward_batch(tokens[None, :, :])
        return out[0], cache

    def forward_batch(self, x: np.ndarray):
        """Batched forward: x is (batch, tokens, dim). Returns (out, cache)."""
        x = _as_f64(x)
        if x.ndim != 3 or x.shape[2] != self.wq.shape[0]:
            raise ShapeError(f"attention input {x.shape} does not match dim {self.wq.shape[0]}")
        b_sz, t, d = x.shape
        h = self.heads
        dh = d // h
        q = x @ self.wq
        k = x @ self.wk
        v = x @ self.wv
        qh = q.reshape(b_sz, t, h, dh)
        kh = k.reshape(b_sz, t, h, dh)
        vh = v.reshape(b_sz, t, h, dh)
        scores = np.einsum("bthd,bshd->bhts", qh, kh) / np.sqrt(dh)
        attn = softmax(scores, axis=-1)
        ctx = np.einsum("bhts,bshd->bthd", attn, vh).reshape(b_sz, t, d)
        mha = ctx @ self.wo
        r1 = x + mha
        h1, ln1_cache = self.ln1.forward(r1)
        ff_pre = h1 @ self.w1 + self.b1
        ff_act = np.maximum(0.0, ff_pre)
        ff_out = ff_act @ self.w2 + self.b2
        r2 = h1 + ff_out
        out, ln2_cache = self.ln2.forward(r2)
        cache = (x, qh, kh, vh, attn, ctx, mha, ln1_cache, h1, ff_pre, ff_act, ln2_cache)
        return out, cache

    def backward_batch(self, grad: np.ndarray, cache):
        """Returns (param_grads, grad_x) with param order matching .params."""
        x, qh, kh, vh, attn, ctx, mha, ln1_cache, h1, ff_pre, ff_act, ln2_cache = cache
        b_sz, t, d = x.shape
        h = self.heads
        dh = d // h
        grad = _as_f64(grad)

        grad_r2, g_gamma2, g_beta2 = layer_norm_bwd(grad, ln2_cache, self.ln2.gamma)
        grad_h1 = grad_r2.copy()
        grad_ff_out = grad_r2
        grad_w2 = np.tensordot(ff_act, grad_ff_out, axes=([0, 1], [0, 1]))
        grad_b2 = grad_ff_out.sum(axis=(0, 1))
        grad_ff_act = grad_ff_out @ self.w2.T
        grad_ff_pre = grad_ff_act * (ff_pre > 0)
        grad_w1 = np.tensordot(h1, grad_ff_pre, axes=([0, 1], [0, 1]))
        grad_b1 = grad_ff_pre.sum(axis=(0, 1))
        grad_h1 += grad_ff_pre @ self.w1.T

        grad_r1, g_gamma1, g_beta1 = layer_norm_bwd(grad_h1, ln1_cache, self.ln1.gamma)
        grad_x = grad_r1.copy()
        grad_mha = grad_r1
        grad_wo = np.tensordot(ctx, grad_mha, axes=([0, 1], [0, 1]))
        grad_ctx = (grad_mha @ self.wo.T).reshape(b_sz, t, h, dh)
        grad_attn = np.einsum("bthd,bshd->bhts", grad_ctx, vh)
        grad_vh = np.einsum("bhts,bthd->bshd", attn, grad_ctx)
        grad_scores = attn * (grad_attn - (attn * grad_attn).sum(axis=-1, keepdims=True))
        grad_scores /= np.sqrt(dh)
        grad_qh = np.einsum("bhts,bshd->bthd", grad_scores, kh)
        grad_kh = np.einsum("bhts,bthd->bshd", grad_scores, qh)
        grad_q = grad_qh.reshape(b_sz, t, d)
        grad_k = grad_kh.reshape(b_sz, t, d)
        grad_v = grad_vh.reshape(b_sz, t, d)
        grad_wq = np.tensordot(x, grad_q, axes=([0, 1], [0, 1]))
        grad_wk = np.tensordot(x, grad_k, axes=([0, 1], [0, 1]))
        grad_wv = np.tensordot(x, grad_v, axes=([0, 1], [0, 1]))
        grad_x += grad_q @ self.wq.T + grad_k @ self.wk.T + grad_v @ self.wv.T

        param_grads = [grad_wq, grad_wk, grad_wv, grad_wo, g_gamma1, g_beta1,
                       grad_w1, grad_b1, grad_w2, grad_b2, g_gamma2, g_beta2]
        return param_grads, grad_x

    def to_record(self):
        meta = {"heads": self.heads}
        tensors = [self.wq, self.wk, self.wv, self.wo, self.ln1.gamma, self.ln1.beta,
                   self.w1, self.b1, self.w2, self.b2, self.ln2.gamma, self.ln2.beta]
        return self.kind, meta, tensors

    @classmethod
    def from_record(cls, meta, tensors) -> "AttentionBlock":
        (wq, wk, wv, wo, g1, be1, w1, b1, w2, b2, g2, be2) = tensors
        return cls(wq, wk, wv, wo, LayerNormLayer(g1, be1), w1, b1, w2, b2,
                   LayerNormLayer(g2, be2), meta["heads"])


def masked_mean_pool(x: np.ndarray, mask: np.ndarray):
    """Mean over time of (batch, ch, T) restricted to mask (batch, T).

    Rows with an empty mask pool to zeros. Returns (pooled, cache).
    """
    x = _as_f64(x)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (x.shape[0], x.shape[2]):
        raise ShapeError(f"mask {mask.shape} does not match input {x.shape}")
    counts = mask.sum(axis=1)
    safe = np.maximum(counts, 1.0)
    pooled = (x * mask[:, None, :]).sum(axis=2) / safe[:, None]
    return pooled, (mask, safe, x.shape)


def masked_mean_pool_bwd(grad: np.ndarray, cache) -> np.ndarray:
    mask, safe, shape = cache
    grad = _as_f64(grad)
    return (grad / safe[:, None])[:, :, None] * mask[:, None, :]


def flatten_params(arrays: list[np.ndarray]) -> np.ndarray:
    """Concatenate arrays into one flat float64 vector."""
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def unflatten_params(vec: np.ndarray, shapes: list[tuple[int, ...]]) -> list[np.ndarray]:
    """Inverse of flatten_params given the original shapes."""
    out = []
    pos = 0
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        out.append(np.asarray(vec[pos:pos + n], dtype=np.float64).reshape(shape))
        pos += n
    if pos != len(vec):
        raise ShapeError(f"flat vector length {len(vec)} does not match shapes (need {pos})")
    return out


def grad_check(loss_fn, params: np.ndarray, epsilon: float) -> float:
    """Compare analytic and central-difference gradients.

    loss_fn maps a flat parameter vector to (loss, grad). Returns the max
    over coordinates of |analytic - central_diff| / max(1, |central_diff|).
    """
    if not epsilon > 0:
        raise NumericError(f"epsilon must be positive, got {epsilon}")
    params = np.asarray(params, dtype=np.float64)
    loss, analytic = loss_fn(params)
    analytic = np.asarray(analytic, dtype=np.float64)
    if not np.isfinite(loss) or not np.all(np.isfinite(analytic)):
        raise NumericError("loss_fn produced a non-finite value at the base point")
    worst = 0.0
    for i in range(params.size):
        p_hi = params.copy()
        p_hi[i] += epsilon
        p_lo = params.copy()
        p_lo[i] -= epsilon
        f_hi = loss_fn(p_hi)[0]
        f_lo = loss_fn(p_lo)[0]
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise NumericError(f"loss_fn non-finite at perturbed coordinate {i}")
        central = (f_hi - f_lo) / (2.0 * epsilon)
        err = abs(analytic[i] - central) / max(1.0, abs(central))
        worst = max(worst, err)
    return worst


class SgdMomentum:
    """Plain SGD with momentum over a list of parameter arrays (in place)."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= self.lr * v


# ---------------------------------------------------------------------------
# Checkpoint format: magic "ONRK", u16 version, u32 record count, then per
# record: kind tag u8, u32 meta length + JSON bytes, u32 tensor count, and
# per tensor u8 ndim, ndim u32 dims, float32 little-endian payload.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"ONRK"
CHECKPOINT_VERSION = 1

_KIND_TAGS = {"meta": 0, "dense": 1, "attention-block": 2, "layer-norm": 3, "conv1d": 4}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_LAYER_CLASSES = {"dense": DenseLayer, "attention-block": AttentionBlock,
                  "layer-norm": LayerNormLayer, "conv1d": Conv1dLayer}


def _encode_record(kind: str, meta: dict, tensors: list[np.ndarray]) -> bytes:
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [struct.pack("<BI", _KIND_TAGS[kind], len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(tensors))]
    for t in tensors:
        arr = np.asarray(t, dtype="<f4")
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(path, layers, model_meta: dict | None = None) -> None:
    """Write layers (each with .to_record()) to an ONRK file.

    model_meta, when given, is stored as a leading meta record.
    """
    records = []
    if model_meta is not None:
        records.append(_encode_record("meta", model_meta, []))
    for layer in layers:
        kind, meta, tensors = layer.to_record()
        records.append(_encode_record(kind, meta, tensors))
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(records)))
        for rec in records:
            fh.write(rec)


def load_checkpoint(path):
    """Read an ONRK file. Returns (layers, model_meta or None)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r} (expected {CHECKPOINT_MAGIC!r})")
    rd = _Reader(data)
    rd.take(4)
    version, n_records = rd.unpack("<HI")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    layers = []
    model_meta = None
    for idx in range(n_records):
        (tag,) = rd.unpack("<B")
        if tag not in _TAG_KINDS:
            raise FormatError(f"unknown layer kind tag {tag}")
        kind = _TAG_KINDS[tag]
        (meta_len,) = rd.unpack("<I")
        meta = json.loads(rd.take(meta_len).decode())
        (n_tensors,) = rd.unpack("<I")
        tensors = []
        for _ in range(n_tensors):
            (ndim,) = rd.unpack("<B")
            shape = rd.unpack(f"<{ndim}I") if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            raw = rd.take(4 * count)
            tensors.append(np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64))
        if kind == "meta":
            if idx != 0:
                raise FormatError("meta record must come first")
            model_meta = meta
        else:
            layers.append(_LAYER_CLASSES[kind].from_record(meta, tensors))
    if rd.pos != len(data):
        raise FormatError("trailing bytes after last checkpoint record")
    return layers, model_meta
