"""MC-dropout uncertainty scoring and out-of-distribution thresholding.

A clip is scored by running the classifier with dropout active for a
fixed number of stochastic passes and aggregating the per-class
population variance of the softmax outputs (mean over classes by
default, max as the configurable alternative). Pass seeds are derived
from (seed, clip_id, pass index), so scores do not depend on clip
ordering or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .classifier import RagaClassifier, clips_to_batch
from .errors import ConfigError, InputError
from .features import ChromaClip

AGGREGATES = ("mean", "max")


@dataclass
class UncertaintyScore:
    clip_id: int
    score: float
    passes: int


@dataclass
class OodDecision:
    clip_id: int
    is_ood: bool
    threshold: float


def mc_scores(model: RagaClassifier, clips: list[ChromaClip], passes: int, seed: int,
              aggregate: str = "mean") -> list[UncertaintyScore]:
    """Predictive-variance scores from `passes` stochastic forward passes."""
    if passes < 1:
        raise InputError(f"need at least one pass, got {passes}")
    if aggregate not in AGGREGATES:
        raise ConfigError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    if not clips:
        raise InputError("no clips to score")
    x, mask = clips_to_batch(clips)
    rate = model.dense1.dropout_rate
    d = model.embed_dim
    all_probs = np.empty((passes, len(clips), model.n_classes))
    for t in range(passes):
        masks = np.empty((len(clips), d))
        for i, clip in enumerate(clips):
            mask_seed = int(np.random.SeedSequence([seed, 53, clip.clip_id, t]).generate_state(1)[0])
            masks[i] = numkit.dropout_mask((d,), rate, mask_seed)
        probs, _ = model.forward_batch(x, mask, train_mode=True, dense1_mask=masks)
        all_probs[t] = probs
    var = all_probs.var(axis=0)  # population variance across passes, per class
    scores = var.mean(axis=1) if aggregate == "mean" else var.max(axis=1)
    return [UncertaintyScore(clip_id=c.clip_id, score=float(s), passes=passes)
            for c, s in zip(clips, scores)]


def calibrate_threshold(id_scores: list[UncertaintyScore], percentile: float) -> float:
    """Given percentile of in-distribution validation scores (linear
    interpolation)."""
    if not 0.0 < percentile < 100.0:
        raise InputError(f"percentile must lie in (0, 100), got {percentile}")
    values = [s.score for s in id_scores]
    if len(values) < 10:
        raise InputError(f"need at least 10 in-distribution scores, got {len(values)}")
    return float(np.percentile(values, percentile))


def decide(scores: list[UncertaintyScore], threshold: float) -> list[OodDecision]:
    """Flag clips whose score strictly exceeds the threshold."""
    return [OodDecision(clip_id=s.clip_id, is_ood=s.score > threshold, threshold=threshold)
            for s in scores]


def ood_accuracy(decisions: list[OodDecision], truth: list[bool]) -> float:
    """Percentage of clips whose flag matches the ground truth."""
    if not decisions or len(decisions) != len(truth):
        raise InputError(f"need matching non-empty sequences, got {len(decisions)} "
                         f"decisions and {len(truth)} truths")
    hits = sum(1 for d, t in zip(decisions, truth) if d.is_ood == bool(t))
    return 100.0 * hits / len(decisions)
