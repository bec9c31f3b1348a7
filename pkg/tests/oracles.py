"""Independent brute-force references used to check the production paths.

These deliberately avoid the vectorized contingency/marginal shortcuts the
library uses: ARI comes from explicit pair counting, MI from dict-based
joint counts, accuracy from exhaustive overlap enumeration, silhouette
from per-point loops, and graph clustering from boolean reachability.
"""

import math
from collections import Counter


def all_partitions(n: int):
    """Every set partition of n items as a label sequence (restricted
    growth strings)."""
    labels = [0] * n

    def rec(i: int, max_used: int):
        if i == n:
            yield tuple(labels)
            return
        for block in range(max_used + 2):
            labels[i] = block
            yield from rec(i + 1, max(max_used, block))

    yield from rec(0, -1)


def ari_pair_oracle(pred, truth) -> float:
    """Adjusted Rand index by looping over all point pairs."""
    n = len(pred)
    a = b = c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_t = truth[i] == truth[j]
            same_p = pred[i] == pred[j]
            if same_t and same_p:
                a += 1
            elif same_t:
                b += 1
            elif same_p:
                c += 1
            else:
                d += 1
    num = 2.0 * (a * d - b * c)
    den = (a + b) * (b + d) + (a + c) * (c + d)
    if den == 0:
        return 1.0 if b == 0 and c == 0 else 0.0
    return num / den


def mi_oracle(pred, truth) -> float:
    """Mutual information in nats from dict-based joint counts."""
    n = len(pred)
    joint = Counter(zip(truth, pred))
    p_t = Counter(truth)
    p_p = Counter(pred)
    mi = 0.0
    for (t, p), cnt in joint.items():
        pj = cnt / n
        mi += pj * math.log(pj / ((p_t[t] / n) * (p_p[p] / n)))
    return max(mi, 0.0)


def accuracy_oracle(pred, truth):
    """Greedy per-true-class matching by exhaustive overlap enumeration.

    Returns (mapping_valid, per_class dict, overall) mirroring the
    production contract.
    """
    true_classes = sorted(set(truth))
    pred_clusters = sorted(set(pred))
    matched = {}
    for t in true_classes:
        best_cluster, best_overlap = None, -1
        for p in pred_clusters:
            overlap = sum(1 for x, y in zip(pred, truth) if x == p and y == t)
            if overlap > best_overlap:
                best_cluster, best_overlap = p, overlap
        matched[t] = (best_cluster, best_overlap)
    winners = [m[0] for m in matched.values()]
    if len(set(winners)) != len(winners):
        return False, None, None
    per_class = {}
    total = 0
    for t, (_, overlap) in matched.items():
        size = sum(1 for y in truth if y == t)
        per_class[t] = 100.0 * overlap / size
        total += overlap
    return True, per_class, 100.0 * total / len(truth)


def silhouette_oracle(points, labels) -> float:
    """Silhouette by direct per-point loops (O(n^2))."""
    n = len(points)

    def dist(i, j):
        return math.sqrt(sum((points[i][k] - points[j][k]) ** 2 for k in range(len(points[i]))))

    scores = []
    clusters = sorted(set(labels))
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(dist(i, j) for j in own) / len(own)
        b = math.inf
        for c in clusters:
            if c == labels[i]:
                continue
            members = [j for j in range(n) if labels[j] == c]
            if members:
                b = min(b, sum(dist(i, j) for j in members) / len(members))
        scores.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return sum(scores) / n


def reachability_components(adjacency) -> list[int]:
    """Connected components via Floyd-Warshall-style boolean closure.

    adjacency is a symmetric list-of-lists of 0/1 (no self loops needed).
    Returns component labels ordered by smallest member index.
    """
    n = len(adjacency)
    reach = [[bool(adjacency[i][j]) or i == j for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                row_k = reach[k]
                row_i = reach[i]
                for j in range(n):
                    if row_k[j]:
                        row_i[j] = True
    labels = [-1] * n
    next_id = 0
    for i in range(n):
        if labels[i] < 0:
            for j in range(n):
                if reach[i][j]:
                    labels[j] = next_id
            next_id += 1
    return labels
