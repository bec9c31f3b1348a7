"""Cluster evaluation.

Label-independent (silhouette) and label-dependent (ARI, mutual
information, per-class clustering accuracy with the mapping-validity rule)
measures, plus the openness of an open-set problem.

Accuracy uses greedy per-true-class matching: each true class claims the
predicted cluster with the largest overlap (ties to the smaller predicted
id). If one predicted cluster is claimed by two or more true classes the
mapping is invalid and accuracy values are withheld.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


def _codes(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise InputError(f"labels must be a flat sequence, got shape {arr.shape}")
    _, codes = np.unique(arr, return_inverse=True)
    return codes


def contingency_table(truth, pred) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counts[i, j] = |true class i ∩ predicted cluster j|.

    Returns (counts, true_values, pred_values) with values in sorted order.
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise InputError(f"label sequences must match, got {truth.shape} and {pred.shape}")
    if truth.size == 0:
        raise InputError("empty label sequences")
    t_vals, t_codes = np.unique(truth, return_inverse=True)
    p_vals, p_codes = np.unique(pred, return_inverse=True)
    counts = np.zeros((t_vals.size, p_vals.size), dtype=np.int64)
    np.add.at(counts, (t_codes, p_codes), 1)
    return counts, t_vals, p_vals


def silhouette(points: np.ndarray, labels) -> float:
    """Mean silhouette over points with Euclidean distances.

    Each point scores (b - a) / max(a, b) where a is its mean distance to
    its own cluster and b the smallest mean distance to another cluster;
    singleton-cluster points score 0.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise InputError(f"points must be (n, d), got {points.shape}")
    codes = _codes(labels)
    if codes.size != points.shape[0]:
        raise InputError("labels length does not match point count")
    k = codes.max() + 1 if codes.size else 0
    if k < 2:
        raise InputError("silhouette needs at least 2 clusters")

    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    n = points.shape[0]
    sizes = np.bincount(codes, minlength=k)
    # cluster_dist[i, c] = total distance from point i to members of cluster c
    cluster_dist = np.zeros((n, k))
    for c in range(k):
        cluster_dist[:, c] = dist[:, codes == c].sum(axis=1)

    scores = np.zeros(n)
    for i in range(n):
        c = codes[i]
        if sizes[c] <= 1:
            continue
        a = cluster_dist[i, c] / (sizes[c] - 1)
        other = [cluster_dist[i, oc] / sizes[oc] for oc in range(k) if oc != c and sizes[oc] > 0]
        b = min(other)
        scores[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(scores.mean())


def ari(pred, truth) -> float:
    """Adjusted Rand index via contingency marginals.

    1 for identical partitions up to relabeling; negative for agreement
    worse than chance (the standard index is not clipped at 0).
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise InputError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size < 2:
        raise InputError("need at least 2 points")
    counts, _, _ = contingency_table(truth, pred)
    n = pred.size

    def comb2(x):
        return x * (x - 1) // 2

    index = int(comb2(counts).sum())
    sum_rows = int(comb2(counts.sum(axis=1)).sum())
    sum_cols = int(comb2(counts.sum(axis=0)).sum())
    total = comb2(n)
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        # Degenerate partitions (all singletons / one cluster on both sides).
        return 1.0 if index == max_index else 0.0
    return float((index - expected) / (max_index - expected))


def mutual_information(pred, truth, base: float | None = None) -> float:
    """MI of the joint empirical distribution over (true, predicted) ids.

    Natural log by default (nats); pass base to change units. Zero-count
    cells contribute nothing.
    """
    counts, _, _ = contingency_table(truth, pred)
    n = counts.sum()
    joint = counts / n
    pt = joint.sum(axis=1, keepdims=True)
    pp = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    mi = float((joint[mask] * np.log(joint[mask] / (pt @ pp)[mask])).sum())
    mi = max(mi, 0.0)  # clamp -0.0 / roundoff
    if base is not None:
        mi /= np.log(base)
    return mi


@dataclass
class AccuracyResult:
    mapping_valid: bool
    per_class: dict | None          # true class -> percentage
    overall: float | None           # matched mass / n * 100
    matching: dict | None           # true class -> predicted cluster


def clustering_accuracy(pred, truth) -> AccuracyResult:
    """Greedy per-true-class accuracy with the validity rule.

    ACC(c) = largest overlap of true class c with any predicted cluster,
    divided by |c|, times 100. The mapping is invalid (and accuracy
    withheld) when one predicted cluster wins two or more true classes.
    """
    counts, t_vals, p_vals = contingency_table(truth, pred)
    winners = counts.argmax(axis=1)  # ties -> first (smallest predicted id)
    claimed: dict[int, int] = {}
    valid = True
    for row, col in enumerate(winners):
        if col in claimed:
            valid = False
            break
        claimed[col] = row
    if not valid:
        return AccuracyResult(mapping_valid=False, per_class=None, overall=None, matching=None)
    per_class = {}
    matching = {}
    matched_mass = 0
    for row, col in enumerate(winners):
        overlap = int(counts[row, col])
        per_class[t_vals[row].item()] = 100.0 * overlap / int(counts[row].sum())
        matching[t_vals[row].item()] = p_vals[col].item()
        matched_mass += overlap
    overall = 100.0 * matched_mass / int(counts.sum())
    return AccuracyResult(mapping_valid=True, per_class=per_class, overall=overall,
                          matching=matching)


def openness(n_train_classes: int, n_test_classes: int) -> float:
    """1 - sqrt(2·train / (2·train + test)); 0 for a closed world."""
    if n_train_classes < 1:
        raise InputError(f"need at least one training class, got {n_train_classes}")
    if n_test_classes < 0:
        raise InputError(f"test class count must be nonnegative, got {n_test_classes}")
    return float(1.0 - np.sqrt(2.0 * n_train_classes / (2.0 * n_train_classes + n_test_classes)))


def metrics_report(points: np.ndarray, pred, truth, n_train_classes: int,
                   mi_base: float | None = None) -> dict:
    """Flat metrics document: ss, ari, mi, acc_overall, acc_per_class,
    mapping_valid, openness. Accuracy keys are absent when the mapping is
    invalid."""
    truth_arr = np.asarray(truth)
    n_test_classes = int(np.unique(truth_arr).size)
    acc = clustering_accuracy(pred, truth)
    try:
        ss = silhouette(points, pred)
    except InputError:
        ss = None  # degenerate single-cluster prediction
    doc = {
        "ss": ss,
        "ari": ari(pred, truth),
        "mi": mutual_information(pred, truth, base=mi_base),
        "mapping_valid": acc.mapping_valid,
        "openness": openness(n_train_classes, n_test_classes),
    }
    if acc.mapping_valid:
        doc["acc_overall"] = acc.overall
        doc["acc_per_class"] = {str(k): v for k, v in sorted(acc.per_class.items())}
    return doc
