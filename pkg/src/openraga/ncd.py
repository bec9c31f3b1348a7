"""Novel-class discovery.

Builds pairwise pseudo-labels over the unlabeled set from feature-space
cosine similarity (same-recording pairs are always positive), and trains
a small self-attention encoder with three losses:

  * pairwise BCE on the affinity of encoder outputs against pseudo-labels,
  * an MSE consistency term between clips and their time/volume-shifted
    views, over both labeled and unlabeled sets,
  * a temperature-scaled contrastive term pulling each anchor toward its
    same-recording clips and augmented views while pushing away its
    hardest negatives mined from the combined labeled+unlabeled pool.

The combined objective is bce + beta * contrastive + gamma * mse. Hard
negatives are ranked in feature space for the first epoch and re-ranked
in encoder space after every epoch. Everything is seeded and
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .classifier import RagaClassifier, embed_batch
from .errors import ConfigError, InputError, NumericError
from .features import ChromaClip, DatasetSplit, make_views, recording_contexts


@dataclass
class NcdConfig:
    delta: float = 0.9              # pseudo-label similarity threshold
    hard_negatives: int = 32
    temperature: float = 0.5
    beta: float = 1.0               # contrastive weight
    gamma: float = 1.0              # consistency weight
    epochs: int = 50
    batch: int = 64
    lr: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    shift_seconds: float = 2.0
    gain_up: float = 1.2
    gain_down: float = 0.8
    labeled_batch: int = 32
    token_count: int = 4
    heads: int = 2
    blocks: int = 2
    d_z: int = 16
    ff_mult: int = 4
    use_bce: bool = True
    use_cl: bool = True
    use_mse: bool = True

    def __post_init__(self):
        if not -1.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (-1, 1), got {self.delta}")
        if self.hard_negatives < 0:
            raise ConfigError(f"hard negative count must be >= 0, got {self.hard_negatives}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.d_z < 2:
            raise ConfigError(f"encoder output dim must be >= 2, got {self.d_z}")


@dataclass
class PairPseudoLabel:
    i: int
    j: int
    t: int
    origin: str  # "threshold" or "same-source"


def _row_norms(z: np.ndarray, what: str = "embedding") -> np.ndarray:
    norms = np.linalg.norm(z, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise InputError(f"zero-norm {what} at row {bad[0]}")
    return norms


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a||b|), clamped to [-1, 1] against roundoff."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"vectors must match, got shapes {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InputError("cosine similarity undefined for a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def build_pseudo_labels(y: np.ndarray, sources, delta: float) -> list[PairPseudoLabel]:
    """Pairwise pseudo-labels over all unordered pairs: positive when the
    cosine similarity reaches delta or the clips share a source recording."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] < 2:
        raise InputError("need at least 2 embeddings")
    sources = list(sources)
    if len(sources) != y.shape[0]:
        raise InputError("sources length does not match embedding count")
    norms = _row_norms(y)
    yn = y / norms[:, None]
    sims = np.clip(yn @ yn.T, -1.0, 1.0)
    pairs = []
    for i in range(y.shape[0]):
        for j in range(i + 1, y.shape[0]):
            if sources[i] == sources[j]:
                pairs.append(PairPseudoLabel(i, j, 1, "same-source"))
            elif sims[i, j] >= delta:
                pairs.append(PairPseudoLabel(i, j, 1, "threshold"))
            else:
                pairs.append(PairPseudoLabel(i, j, 0, "threshold"))
    return pairs


AFFINITY_CLAMP = 1e-7


def pair_affinity(z_i: np.ndarray, z_j: np.ndarray) -> float:
    """Cosine of two encoder outputs mapped to (0, 1): p = (1 + cos) / 2,
    clamped to [1e-7, 1 - 1e-7] so the BCE stays finite."""
    cos = cosine_sim(z_i, z_j)
    return float(np.clip((1.0 + cos) / 2.0, AFFINITY_CLAMP, 1.0 - AFFINITY_CLAMP))


def _pair_arrays(pairs: list[PairPseudoLabel]):
    ii = np.array([p.i for p in pairs], dtype=np.int64)
    jj = np.array([p.j for p in pairs], dtype=np.int64)
    tt = np.array([p.t for p in pairs], dtype=np.float64)
    return ii, jj, tt


def bce_loss_grad(pairs: list[PairPseudoLabel], z: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over pairs of -[t log p + (1-t) log(1-p)] and its gradient
    w.r.t. the encoder outputs."""
    if not pairs:
        raise InputError("need at least one pair")
    z = np.asarray(z, dtype=np.float64)
    norms = _row_norms(z, "encoder output")
    zn = z / norms[:, None]
    ii, jj, tt = _pair_arrays(pairs)
    cos = np.clip((zn[ii] * zn[jj]).sum(axis=1), -1.0, 1.0)
    p_raw = (1.0 + cos) / 2.0
    p = np.clip(p_raw, AFFINITY_CLAMP, 1.0 - AFFINITY_CLAMP)
    loss = float(-(tt * np.log(p) + (1.0 - tt) * np.log(1.0 - p)).mean())

    dp = -(tt / p - (1.0 - tt) / (1.0 - p)) / len(pairs)
    dcos = dp * 0.5
    dcos[(p_raw < AFFINITY_CLAMP) | (p_raw > 1.0 - AFFINITY_CLAMP)] = 0.0
    grad = np.zeros_like(z)
    gi = dcos[:, None] * (zn[jj] - cos[:, None] * zn[ii]) / norms[ii][:, None]
    gj = dcos[:, None] * (zn[ii] - cos[:, None] * zn[jj]) / norms[jj][:, None]
    np.add.at(grad, ii, gi)
    np.add.at(grad, jj, gj)
    return loss, grad


def bce_loss(pairs: list[PairPseudoLabel], z: np.ndarray) -> float:
    return bce_loss_grad(pairs, z)[0]


def consistency_loss_grad(z_l: np.ndarray, z_l_t: np.ndarray, z_u: np.ndarray,
                          z_u_t: np.ndarray):
    """Mean squared difference between outputs and their transformed twins,
    one term per set (an empty labeled set contributes 0).

    Returns (loss, grad_z_l, grad_z_l_t, grad_z_u, grad_z_u_t).
    """
    def term(a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise InputError(f"set and its transformed twin differ: {a.shape} vs {b.shape}")
        if a.size == 0:
            return 0.0, np.zeros_like(a), np.zeros_like(b)
        diff = a - b
        grad = 2.0 * diff / diff.size
        return float((diff * diff).mean()), grad, -grad

    loss_l, g_l, g_lt = term(z_l, z_l_t)
    loss_u, g_u, g_ut = term(z_u, z_u_t)
    return loss_l + loss_u, g_l, g_lt, g_u, g_ut


def consistency_loss(z_l, z_l_t, z_u, z_u_t) -> float:
    return consistency_loss_grad(z_l, z_l_t, z_u, z_u_t)[0]


def hard_negatives(anchor: np.ndarray, candidates: np.ndarray, count: int) -> np.ndarray:
    """Indices of the `count` candidates least cosine-similar to the anchor,
    similarity ascending, ties broken by smaller index. The anchor itself
    must not be among the candidates."""
    candidates = np.asarray(candidates, dtype=np.float64)
    if count > candidates.shape[0]:
        raise InputError(f"requested {count} negatives from {candidates.shape[0]} candidates")
    if count == 0:
        return np.array([], dtype=np.int64)
    anchor = np.asarray(anchor, dtype=np.float64)
    na = np.linalg.norm(anchor)
    if na == 0:
        raise InputError("cosine similarity undefined for a zero-norm anchor")
    norms = _row_norms(candidates, "candidate")
    sims = np.clip(candidates @ anchor / (norms * na), -1.0, 1.0)
    return np.argsort(sims, kind="stable")[:count]


def positive_set(index: int, sources, z: np.ndarray, z_view_a: np.ndarray,
                 z_view_b: np.ndarray) -> np.ndarray:
    """Positive counterparts of an anchor: encoder outputs of its
    same-source clips plus the anchor's own two transformed views (never
    its own untransformed output)."""
    sources = list(sources)
    siblings = [j for j, s in enumerate(sources) if s == sources[index] and j != index]
    rows = [z[j] for j in siblings] + [z_view_a[index], z_view_b[index]]
    return np.stack(rows)


def contrastive_loss_grad(z: np.ndarray, positives: np.ndarray, negatives: np.ndarray,
                          tau: float):
    """Temperature-scaled contrastive loss for one anchor.

    -(1/|positives|) sum over positives of log of the positive's softmax
    weight against the negatives. Empty negative set gives exactly 0.
    Returns (loss, grad_z, grad_positives, grad_negatives).
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    z = np.asarray(z, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, z.shape[0])
    n_pos = positives.shape[0]
    if n_pos == 0:
        raise InputError("need at least one positive")
    nz = np.linalg.norm(z)
    if nz == 0:
        raise InputError("zero-norm anchor")
    p_norms = _row_norms(positives, "positive")
    cos_pos = np.clip(positives @ z / (p_norms * nz), -1.0, 1.0)
    grad_z = np.zeros_like(z)
    grad_pos = np.zeros_like(positives)
    grad_neg = np.zeros_like(negatives)

    def cos_bwd(coef, vec, vn, cos):
        # d cos(z, vec) scaled by coef: contributions to (z, vec)
        dz = coef * (vec / vn - cos * z / nz) / nz
        dv = coef * (z / nz - cos * vec / vn) / vn
        return dz, dv

    if negatives.shape[0] == 0:
        return 0.0, grad_z, grad_pos, grad_neg

    n_norms = _row_norms(negatives, "negative")
    cos_neg = np.clip(negatives @ z / (n_norms * nz), -1.0, 1.0)
    a = cos_pos / tau
    b = cos_neg / tau
    loss = 0.0
    dcos_pos = np.zeros(n_pos)
    dcos_neg = np.zeros(negatives.shape[0])
    for p in range(n_pos):
        logits = np.concatenate(([a[p]], b))
        m = logits.max()
        exps = np.exp(logits - m)
        lse = m + np.log(exps.sum())
        loss += lse - a[p]
        soft = exps / exps.sum()
        dcos_pos[p] = (soft[0] - 1.0) / (n_pos * tau)
        dcos_neg += soft[1:] / (n_pos * tau)
    loss /= n_pos

    for p in range(n_pos):
        dz, dv = cos_bwd(dcos_pos[p], positives[p], p_norms[p], cos_pos[p])
        grad_z += dz
        grad_pos[p] = dv
    for h in range(negatives.shape[0]):
        dz, dv = cos_bwd(dcos_neg[h], negatives[h], n_norms[h], cos_neg[h])
        grad_z += dz
        grad_neg[h] = dv
    return float(loss), grad_z, grad_pos, grad_neg


def contrastive_loss(z, positives, negatives, tau: float) -> float:
    return contrastive_loss_grad(z, positives, negatives, tau)[0]


def total_loss(l_bce: float, l_cl: float, l_mse: float, beta: float, gamma: float) -> float:
    """Combined objective: bce + beta * contrastive + gamma * consistency."""
    if beta < 0 or gamma < 0:
        raise ConfigError("loss weights must be nonnegative")
    return float(l_bce + beta * l_cl + gamma * l_mse)


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


class NcdEncoder:
    """Splits a feature embedding into tokens, runs stacked attention
    blocks, mean-pools over tokens, and projects to the output dim."""

    def __init__(self, blocks: list[numkit.AttentionBlock], proj: numkit.DenseLayer,
                 token_count: int):
        self.blocks = blocks
        self.proj = proj
        self.token_count = token_count
        self.token_dim = blocks[0].wq.shape[0] if blocks else proj.w.shape[0]

    @classmethod
    def init(cls, in_dim: int, config: NcdConfig) -> "NcdEncoder":
        if in_dim % config.token_count != 0:
            raise ConfigError(f"embedding dim {in_dim} not divisible by token count "
                              f"{config.token_count}")
        token_dim = in_dim // config.token_count
        if token_dim % config.heads != 0:
            raise ConfigError(f"token dim {token_dim} not divisible by head count {config.heads}")
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 60]))
        blocks = [numkit.AttentionBlock.init(token_dim, config.heads, rng, config.ff_mult)
                  for _ in range(config.blocks)]
        proj = numkit.DenseLayer.init(token_dim, config.d_z, rng)
        return cls(blocks, proj, config.token_count)

    @property
    def params(self) -> list[np.ndarray]:
        out = [p for blk in self.blocks for p in blk.params]
        return out + list(self.proj.params)

    @property
    def out_dim(self) -> int:
        return self.proj.w.shape[1]

    def forward_batch(self, y: np.ndarray):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != self.token_count * self.token_dim:
            raise ConfigError(f"encoder expects dim {self.token_count * self.token_dim}, "
                              f"got input shape {y.shape}")
        x = y.reshape(y.shape[0], self.token_count, self.token_dim)
        caches = []
        for blk in self.blocks:
            x, cache = blk.forward_batch(x)
            caches.append(cache)
        pooled = x.mean(axis=1)
        z, proj_cache = self.proj.forward(pooled)
        return z, (caches, proj_cache)

    def backward_batch(self, grad_z: np.ndarray, cache):
        caches, proj_cache = cache
        proj_grads, grad_pooled = self.proj.backward(grad_z, proj_cache)
        grad_x = np.repeat(grad_pooled[:, None, :], self.token_count, axis=1) / self.token_count
        block_grads = []
        for blk, blk_cache in zip(reversed(self.blocks), reversed(caches)):
            grads, grad_x = blk.backward_batch(grad_x, blk_cache)
            block_grads = grads + block_grads
        return block_grads + proj_grads

    def save(self, path) -> None:
        meta = {"model": "ncd-encoder", "token_count": self.token_count}
        numkit.save_checkpoint(path, [*self.blocks, self.proj], meta)

    @classmethod
    def load(cls, path) -> "NcdEncoder":
        layers, meta = numkit.load_checkpoint(path)
        if meta is None or meta.get("model") != "ncd-encoder":
            raise InputError(f"{path} is not an encoder checkpoint")
        *blocks, proj = layers
        return cls(blocks, proj, meta["token_count"])


def encoder_forward(model: NcdEncoder, y: np.ndarray) -> np.ndarray:
    """Deterministic single-embedding forward: y (d,) -> z (d_z,)."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ConfigError(f"expected a single embedding vector, got shape {y.shape}")
    z, _ = model.forward_batch(y[None, :])
    return z[0]


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _views_for(clips: list[ChromaClip], contexts: dict[int, np.ndarray],
               config: NcdConfig) -> tuple[list[ChromaClip], list[ChromaClip]]:
    va, vb = [], []
    for clip in clips:
        a, b = make_views(clip, config.shift_seconds, config.gain_up, config.gain_down,
                          contexts[clip.source_id])
        va.append(a)
        vb.append(b)
    return va, vb


def _rank_negatives(pool: np.ndarray, anchor_rows: np.ndarray, count: int) -> list[np.ndarray]:
    """Per-anchor hard-negative pool indices; anchors are the first rows of
    the pool and each anchor excludes itself."""
    norms = _row_norms(pool, "candidate")
    pn = pool / norms[:, None]
    ranked = []
    for i in anchor_rows:
        sims = np.clip(pn @ pn[i], -1.0, 1.0)
        sims[i] = 2.0  # self can never be picked
        ranked.append(np.argsort(sims, kind="stable")[:count])
    return ranked


def train_ncd(split: DatasetSplit, f_feat: RagaClassifier, config: NcdConfig
              ) -> tuple[NcdEncoder, list[tuple[int, float, float, float, float]]]:
    """Train the encoder on the unlabeled set.

    Structure: extract features; build pseudo-labels over all unordered
    unlabeled pairs; build shifted/volume views and their features; mine
    per-anchor hard negatives from the labeled+unlabeled pool and collect
    positives; then run seeded mini-batch SGD on the combined loss. Returns
    the encoder and the per-epoch loss log (epoch, bce, cl, mse, total).
    """
    u_clips = split.unlabeled_clips
    if not u_clips:
        raise InputError("unlabeled set is empty")
    l_clips = split.train_clips

    contexts = recording_contexts(list(split.clips))
    y_u = embed_batch(f_feat, u_clips)
    y_l = embed_batch(f_feat, l_clips) if l_clips else np.zeros((0, y_u.shape[1]))
    m = len(u_clips)
    sources_u = [c.source_id for c in u_clips]

    try:
        pairs = build_pseudo_labels(y_u, sources_u, config.delta)
    except InputError as exc:
        raise InputError(f"pseudo-label construction failed: {exc}") from exc
    t_matrix = np.zeros((m, m))
    for p in pairs:
        t_matrix[p.i, p.j] = t_matrix[p.j, p.i] = p.t

    va_u_clips, vb_u_clips = _views_for(u_clips, contexts, config)
    yv_a_u = embed_batch(f_feat, va_u_clips)
    yv_b_u = embed_batch(f_feat, vb_u_clips)
    if l_clips:
        va_l_clips, vb_l_clips = _views_for(l_clips, contexts, config)
        yv_a_l = embed_batch(f_feat, va_l_clips)
        yv_b_l = embed_batch(f_feat, vb_l_clips)
    else:
        yv_a_l = yv_b_l = np.zeros((0, y_u.shape[1]))

    pool = np.vstack([y_u, y_l]) if len(l_clips) else y_u.copy()
    h = min(config.hard_negatives, pool.shape[0] - 1)
    neg_rows = _rank_negatives(pool, np.arange(m), h)

    siblings = [[j for j in range(m) if sources_u[j] == sources_u[i] and j != i]
                for i in range(m)]

    encoder = NcdEncoder.init(y_u.shape[1], config)
    log: list[tuple[int, float, float, float, float]] = []
    if config.epochs == 0:
        return encoder, log
    optimizer = numkit.SgdMomentum(encoder.params, lr=config.lr, momentum=config.momentum)
    n_l = len(l_clips)

    for epoch in range(config.epochs):
        order = np.random.default_rng(np.random.SeedSequence([config.seed, 61, epoch])).permutation(m)
        l_order = (np.random.default_rng(np.random.SeedSequence([config.seed, 62, epoch]))
                   .permutation(n_l) if n_l else np.array([], dtype=np.int64))
        l_cursor = 0
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, m, config.batch):
            anchors = order[start:start + config.batch]
            if n_l and config.use_mse:
                lb = np.array([l_order[(l_cursor + k) % n_l] for k in range(config.labeled_batch)])
                l_cursor += config.labeled_batch
            else:
                lb = np.array([], dtype=np.int64)

            # Assemble the unique rows this batch runs through the encoder.
            row_of: dict[tuple[str, int], int] = {}
            feats: list[np.ndarray] = []

            def row(kind: str, idx: int) -> int:
                key = (kind, int(idx))
                if key not in row_of:
                    row_of[key] = len(feats)
                    source = {"u": y_u, "l": y_l, "ua": yv_a_u, "ub": yv_b_u,
                              "la": yv_a_l, "lb": yv_b_l}[kind]
                    feats.append(source[idx])
                return row_of[key]

            anchor_rows = np.array([row("u", i) for i in anchors])
            for i in anchors:
                for j in siblings[i]:
                    row("u", j)
                if config.use_cl:
                    for p_idx in neg_rows[i]:
                        row("u", p_idx) if p_idx < m else row("l", p_idx - m)
                row("ua", i)
                row("ub", i)
            for j in lb:
                row("l", j)
                row("la", j)
                row("lb", j)

            z_all, cache = encoder.forward_batch(np.stack(feats))
            grad_all = np.zeros_like(z_all)

            l_bce = l_cl = l_mse = 0.0
            if config.use_bce and len(anchors) >= 2:
                batch_pairs = [PairPseudoLabel(a, b, int(t_matrix[anchors[a], anchors[b]]), "batch")
                               for a in range(len(anchors)) for b in range(a + 1, len(anchors))]
                l_bce, g = bce_loss_grad(batch_pairs, z_all[anchor_rows])
                np.add.at(grad_all, anchor_rows, g)

            if config.use_cl:
                cl_scale = config.beta / len(anchors)
                for a_pos, i in enumerate(anchors):
                    pos_rows = [row_of[("u", j)] for j in siblings[i]]
                    pos_rows += [row_of[("ua", int(i))], row_of[("ub", int(i))]]
                    nrows = [row_of[("u", int(p))] if p < m else row_of[("l", int(p) - m)]
                             for p in neg_rows[i]]
                    loss_i, gz, gp, gn = contrastive_loss_grad(
                        z_all[anchor_rows[a_pos]], z_all[pos_rows], z_all[nrows],
                        config.temperature)
                    l_cl += loss_i / len(anchors)
                    grad_all[anchor_rows[a_pos]] += cl_scale * gz
                    for r, g_row in zip(pos_rows, gp):
                        grad_all[r] += cl_scale * g_row
                    for r, g_row in zip(nrows, gn):
                        grad_all[r] += cl_scale * g_row

            if config.use_mse:
                u_rows = anchor_rows
                ua_rows = np.array([row_of[("ua", int(i))] for i in anchors])
                ub_rows = np.array([row_of[("ub", int(i))] for i in anchors])
                lr_rows = np.array([row_of[("l", int(j))] for j in lb], dtype=np.int64)
                la_rows = np.array([row_of[("la", int(j))] for j in lb], dtype=np.int64)
                lb_rows = np.array([row_of[("lb", int(j))] for j in lb], dtype=np.int64)
                zl = z_all[lr_rows] if lr_rows.size else np.zeros((0, encoder.out_dim))
                for view_rows_l, view_rows_u in ((la_rows, ua_rows), (lb_rows, ub_rows)):
                    zlt = z_all[view_rows_l] if view_rows_l.size else np.zeros((0, encoder.out_dim))
                    loss_v, g_l, g_lt, g_u, g_ut = consistency_loss_grad(
                        zl, zlt, z_all[u_rows], z_all[view_rows_u])
                    l_mse += 0.5 * loss_v
                    if lr_rows.size:
                        np.add.at(grad_all, lr_rows, 0.5 * config.gamma * g_l)
                        np.add.at(grad_all, view_rows_l, 0.5 * config.gamma * g_lt)
                    np.add.at(grad_all, u_rows, 0.5 * config.gamma * g_u)
                    np.add.at(grad_all, view_rows_u, 0.5 * config.gamma * g_ut)

            total = total_loss(l_bce, l_cl, l_mse, config.beta, config.gamma)
            if not np.isfinite(total):
                raise NumericError(f"non-finite NCD loss at epoch {epoch}: "
                                   f"bce={l_bce} cl={l_cl} mse={l_mse}")
            grads = encoder.backward_batch(grad_all, cache)
            optimizer.step(grads)
            sums += (l_bce, l_cl, l_mse, total)
            n_batches += 1

        log.append((epoch, *(sums / max(n_batches, 1))))
        # Re-rank hard negatives in encoder output space for the next epoch.
        if config.use_cl and epoch + 1 < config.epochs:
            z_pool, _ = encoder.forward_batch(pool)
            neg_rows = _rank_negatives(z_pool, np.arange(m), h)
    return encoder, log
