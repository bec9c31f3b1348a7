"""Supervised raga classifier and feature extractor.

A small temporal model over chroma clips: two 1-D convolutions over time,
masked mean-pooling (silent frames carry no signal), a dense embedding
layer with dropout, and a softmax output over the labeled classes. The
penultimate activation doubles as the feature extractor for OOD scoring
and novel-class discovery.

Training is plain SGD with momentum, seeded shuffling, and checkpointing
of the best validation macro-F1 epoch, so runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .errors import ConfigError, InputError, NumericError, ShapeError
from .features import ChromaClip, DatasetSplit


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.05
    batch: int = 32
    seed: int = 0
    embed_dim: int = 32
    dropout: float = 0.3
    momentum: float = 0.9
    conv_channels: int = 32
    kernel: int = 5


class RagaClassifier:
    """conv -> conv -> masked mean-pool -> dense(embed, dropout) -> dense(K)."""

    def __init__(self, conv1: numkit.Conv1dLayer, conv2: numkit.Conv1dLayer,
                 dense1: numkit.DenseLayer, dense2: numkit.DenseLayer,
                 class_labels: list[int]):
        self.conv1 = conv1
        self.conv2 = conv2
        self.dense1 = dense1
        self.dense2 = dense2
        self.class_labels = list(class_labels)
        self.label_index = {lab: i for i, lab in enumerate(self.class_labels)}

    @classmethod
    def init(cls, class_labels: list[int], config: TrainConfig) -> "RagaClassifier":
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 40]))
        ch = config.conv_channels
        conv1 = numkit.Conv1dLayer.init(12, ch, config.kernel, rng)
        conv2 = numkit.Conv1dLayer.init(ch, ch, config.kernel, rng)
        dense1 = numkit.DenseLayer.init(ch, config.embed_dim, rng, activation="relu",
                                        dropout_rate=config.dropout)
        dense2 = numkit.DenseLayer.init(config.embed_dim, len(class_labels), rng,
                                        activation="linear")
        return cls(conv1, conv2, dense1, dense2, class_labels)

    @property
    def layers(self):
        return [self.conv1, self.conv2, self.dense1, self.dense2]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def embed_dim(self) -> int:
        return self.dense1.w.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def forward_batch(self, x: np.ndarray, mask: np.ndarray, train_mode: bool = False,
                      rng_seed: int = 0, dense1_mask: np.ndarray | None = None):
        """x is (B, 12, T); mask is (B, T) marking non-silent frames.

        Returns (probs (B, K), cache). In train_mode the embedding layer's
        dropout mask comes from rng_seed unless dense1_mask is supplied.
        """
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.conv2.forward(h1)
        pooled, cp = numkit.masked_mean_pool(h2, mask)
        emb, cd1 = self.dense1.forward(pooled, train_mode=train_mode, rng_seed=rng_seed,
                                       mask=dense1_mask)
        logits, cd2 = self.dense2.forward(emb)
        probs = numkit.softmax(logits, axis=-1)
        return probs, (c1, c2, cp, cd1, cd2, probs)

    def backward_batch(self, grad_logits: np.ndarray, cache):
        c1, c2, cp, cd1, cd2, _ = cache
        g2, grad_emb = self.dense2.backward(grad_logits, cd2)
        g1, grad_pooled = self.dense1.backward(grad_emb, cd1)
        grad_h2 = numkit.masked_mean_pool_bwd(grad_pooled, cp)
        gc2, grad_h1 = self.conv2.backward(grad_h2, c2)
        gc1, _ = self.conv1.backward(grad_h1, c1)
        return [*gc1, *gc2, *g1, *g2]

    def save(self, path) -> None:
        meta = {"model": "raga-classifier", "class_labels": self.class_labels}
        numkit.save_checkpoint(path, self.layers, meta)

    @classmethod
    def load(cls, path) -> "RagaClassifier":
        layers, meta = numkit.load_checkpoint(path)
        if meta is None or meta.get("model") != "raga-classifier":
            raise InputError(f"{path} is not a classifier checkpoint")
        conv1, conv2, dense1, dense2 = layers
        return cls(conv1, conv2, dense1, dense2, [int(c) for c in meta["class_labels"]])


def clips_to_batch(clips: list[ChromaClip]) -> tuple[np.ndarray, np.ndarray]:
    """Stack clips into (B, 12, Tmax) with zero padding and a frame mask."""
    if not clips:
        raise InputError("empty clip batch")
    t_max = max(c.frames.shape[1] for c in clips)
    x = np.zeros((len(clips), 12, t_max))
    for i, clip in enumerate(clips):
        x[i, :, :clip.frames.shape[1]] = clip.frames
    mask = (x.sum(axis=1) > 0).astype(np.float64)
    return x, mask


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    b = probs.shape[0]
    loss = float(-np.log(probs[np.arange(b), targets] + 1e-300).mean())
    grad_logits = probs.copy()
    grad_logits[np.arange(b), targets] -= 1.0
    return loss, grad_logits / b


def predict_proba(model: RagaClassifier, clip: ChromaClip, train_mode: bool = False,
                  seed: int = 0) -> np.ndarray:
    """Class probability vector for one clip; deterministic when train_mode
    is off, dropout-active and seed-determined when on."""
    x, mask = clips_to_batch([clip])
    probs, _ = model.forward_batch(x, mask, train_mode=train_mode, rng_seed=seed)
    return probs[0]


def extract_embedding(model: RagaClassifier, clip: ChromaClip) -> np.ndarray:
    """Penultimate-layer activation (dropout disabled)."""
    return embed_batch(model, [clip])[0]


def embed_batch(model: RagaClassifier, clips: list[ChromaClip]) -> np.ndarray:
    x, mask = clips_to_batch(clips)
    h1, _ = model.conv1.forward(x)
    h2, _ = model.conv2.forward(h1)
    pooled, _ = numkit.masked_mean_pool(h2, mask)
    emb, _ = model.dense1.forward(pooled)
    return emb


def predict_labels(model: RagaClassifier, clips: list[ChromaClip]) -> list[int]:
    x, mask = clips_to_batch(clips)
    probs, _ = model.forward_batch(x, mask)
    return [model.class_labels[i] for i in probs.argmax(axis=1)]


def macro_f1(predictions, truths) -> float:
    """Unweighted mean of per-class F1 over classes present in either
    sequence."""
    predictions = list(predictions)
    truths = list(truths)
    if not predictions or len(predictions) != len(truths):
        raise InputError(f"need matching non-empty label sequences, got "
                         f"{len(predictions)} and {len(truths)}")
    classes = sorted(set(predictions) | set(truths))
    scores = []
    for cls in classes:
        tp = sum(1 for p, t in zip(predictions, truths) if p == cls and t == cls)
        fp = sum(1 for p, t in zip(predictions, truths) if p == cls and t != cls)
        fn = sum(1 for p, t in zip(predictions, truths) if p != cls and t == cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return float(np.mean(scores))


def train_classifier(split: DatasetSplit, config: TrainConfig
                     ) -> tuple[RagaClassifier, list[tuple[int, float, float]]]:
    """Mini-batch SGD on cross-entropy over the train partition.

    Returns the model restored to its best validation macro-F1 checkpoint
    and the per-epoch log [(epoch, mean train loss, val macro-F1)]. With an
    empty validation partition the train macro-F1 stands in.
    """
    train_clips = split.train_clips
    if not train_clips:
        raise ConfigError("train partition is empty")
    train_labels = sorted(set(c.label for c in train_clips))
    if len(train_labels) < 2:
        raise ConfigError(f"need at least 2 classes in train, got {train_labels}")
    if set(train_labels) != set(split.labeled_classes):
        missing = set(split.labeled_classes) - set(train_labels)
        raise ConfigError(f"classes missing from train partition: {sorted(missing)}")

    model = RagaClassifier.init(train_labels, config)
    optimizer = numkit.SgdMomentum(model.params, lr=config.lr, momentum=config.momentum)
    x_all, mask_all = clips_to_batch(train_clips)
    y_all = np.array([model.label_index[c.label] for c in train_clips])
    eval_clips = split.val_clips if split.val_clips else train_clips

    def eval_f1() -> float:
        preds = predict_labels(model, eval_clips)
        return macro_f1(preds, [c.label for c in eval_clips])

    log: list[tuple[int, float, float]] = []
    best_f1 = -1.0
    best_params = [p.copy() for p in model.params]
    n = len(train_clips)
    for epoch in range(config.epochs):
        order = np.random.default_rng(np.random.SeedSequence([config.seed, 41, epoch])).permutation(n)
        losses = []
        for b_idx, start in enumerate(range(0, n, config.batch)):
            idx = order[start:start + config.batch]
            drop_seed = int(np.random.SeedSequence([config.seed, 43, epoch, b_idx]).generate_state(1)[0])
            probs, cache = model.forward_batch(x_all[idx], mask_all[idx], train_mode=True,
                                               rng_seed=drop_seed)
            loss, grad_logits = cross_entropy(probs, y_all[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {b_idx}")
            grads = model.backward_batch(grad_logits, cache)
            optimizer.step(grads)
            losses.append(loss)
        val_f1 = eval_f1()
        log.append((epoch, float(np.mean(losses)), val_f1))
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_params = [p.copy() for p in model.params]
    for p, bp in zip(model.params, best_params):
        p[...] = bp
    return model, log
