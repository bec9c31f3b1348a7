import numpy as np
import pytest

from openraga import metrics
from openraga.errors import InputError

from oracles import (accuracy_oracle, all_partitions, ari_pair_oracle, mi_oracle,
                     silhouette_oracle)


# -- silhouette -------------------------------------------------------------

def test_silhouette_two_tight_pairs():
    points = np.array([[0.0], [0.1], [10.0], [10.1]])
    labels = [0, 0, 1, 1]
    # hand evaluation: a=0.1 everywhere, b in {10.05, 9.95}
    expected = np.mean([(10.05 - 0.1) / 10.05, (9.95 - 0.1) / 9.95,
                        (9.95 - 0.1) / 9.95, (10.05 - 0.1) / 10.05])
    assert metrics.silhouette(points, labels) == pytest.approx(expected, abs=1e-12)
    assert metrics.silhouette(points, labels) == pytest.approx(0.990, abs=1e-3)


def test_silhouette_interleaved_identical_sets_nonpositive():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(20, 3))
    points = np.vstack([base, base])
    labels = [0] * 20 + [1] * 20  # identical point sets split arbitrarily
    assert metrics.silhouette(points, labels) <= 0.0


def test_silhouette_well_separated_blobs():
    rng = np.random.default_rng(1)
    points = np.vstack([rng.normal(0, 0.05, size=(30, 2)),
                        rng.normal(50, 0.05, size=(30, 2))])
    labels = [0] * 30 + [1] * 30
    assert metrics.silhouette(points, labels) > 0.95


def test_silhouette_single_cluster_is_error():
    with pytest.raises(InputError):
        metrics.silhouette(np.zeros((4, 2)), [0, 0, 0, 0])


def test_silhouette_matches_bruteforce_reference():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(4, 30))
        k = int(rng.integers(2, 5))
        points = rng.normal(size=(n, 3))
        labels = rng.integers(0, k, size=n)
        labels[:k] = np.arange(k)  # every cluster non-empty
        assert metrics.silhouette(points, labels) == pytest.approx(
            silhouette_oracle(points.tolist(), labels.tolist()), abs=1e-12)


# -- ari ----------------------------------------------------------------------

def test_ari_identical_partitions():
    assert metrics.ari([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0)


def test_ari_relabeling_invariance():
    assert metrics.ari([2, 2, 0, 0, 1], [5, 5, 9, 9, 7]) == pytest.approx(1.0)


def test_ari_worse_than_chance_is_negative():
    # crossed pairs: hand pair-counting gives -0.5
    assert metrics.ari([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(-0.5)


def test_ari_length_mismatch():
    with pytest.raises(InputError):
        metrics.ari([0, 1], [0, 1, 2])


def test_ari_exhaustive_small_partitions():
    for n in range(2, 6):
        partitions = list(all_partitions(n))
        for truth in partitions:
            for pred in partitions:
                assert metrics.ari(pred, truth) == pytest.approx(
                    ari_pair_oracle(pred, truth), abs=1e-9)


# -- mutual information ---------------------------------------------------------

def test_mi_constant_prediction_is_zero():
    assert metrics.mutual_information([0, 0, 0, 0], [0, 1, 2, 3]) == pytest.approx(0.0)


def test_mi_perfect_two_cluster_split_is_ln2():
    assert metrics.mutual_information([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(np.log(2))


def test_mi_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.integers(0, 4, size=12)
        b = rng.integers(0, 3, size=12)
        assert metrics.mutual_information(a, b) == pytest.approx(
            metrics.mutual_information(b, a), abs=1e-12)


def test_mi_base_conversion():
    nats = metrics.mutual_information([0, 0, 1, 1], [0, 0, 1, 1])
    bits = metrics.mutual_information([0, 0, 1, 1], [0, 0, 1, 1], base=2)
    assert bits == pytest.approx(nats / np.log(2))


def test_mi_exhaustive_small_partitions():
    for n in range(2, 6):
        partitions = list(all_partitions(n))
        for truth in partitions:
            for pred in partitions:
                assert metrics.mutual_information(pred, truth) == pytest.approx(
                    mi_oracle(pred, truth), abs=1e-12)


# -- clustering accuracy ---------------------------------------------------------

def test_accuracy_hand_example():
    # T1={a,b,c}, T2={d,e}; P1={a,b}, P2={c,d,e}
    truth = [1, 1, 1, 2, 2]
    pred = [1, 1, 2, 2, 2]
    res = metrics.clustering_accuracy(pred, truth)
    assert res.mapping_valid
    assert res.per_class[1] == pytest.approx(100 * 2 / 3, abs=0.01)
    assert res.per_class[2] == pytest.approx(100.0)
    assert res.overall == pytest.approx(100 * 4 / 5)


def test_accuracy_perfect():
    res = metrics.clustering_accuracy([0, 1, 2, 0], [5, 6, 7, 5])
    assert res.mapping_valid
    assert all(v == pytest.approx(100.0) for v in res.per_class.values())
    assert res.overall == pytest.approx(100.0)


def test_accuracy_shared_argmax_invalidates():
    res = metrics.clustering_accuracy([0, 0, 0, 0], [0, 0, 1, 1])
    assert not res.mapping_valid
    assert res.per_class is None and res.overall is None


def test_accuracy_tie_breaks_to_smaller_predicted_id():
    # true class 0 overlaps clusters 0 and 1 equally; cluster 0 must win,
    # which then invalidates nothing because class 1 maps to cluster 2.
    pred = [0, 1, 2, 2]
    truth = [0, 0, 1, 1]
    res = metrics.clustering_accuracy(pred, truth)
    assert res.mapping_valid
    assert res.matching[0] == 0


def test_accuracy_matches_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(2, 21))
        pred = rng.integers(0, int(rng.integers(1, 6)), size=n).tolist()
        truth = rng.integers(0, int(rng.integers(1, 6)), size=n).tolist()
        valid, per_class, overall = accuracy_oracle(pred, truth)
        res = metrics.clustering_accuracy(pred, truth)
        assert res.mapping_valid == valid
        if valid:
            assert res.overall == pytest.approx(overall, abs=1e-9)
            for cls, value in per_class.items():
                assert res.per_class[cls] == pytest.approx(value, abs=1e-9)


# -- openness ------------------------------------------------------------------

def test_openness_paper_values():
    assert metrics.openness(12, 5) == pytest.approx(0.0903, abs=1e-4)
    assert metrics.openness(12, 12) == pytest.approx(0.1835, abs=1e-4)


def test_openness_closed_world():
    for n in (1, 5, 12):
        assert metrics.openness(n, 0) == 0.0


def test_openness_zero_train_classes_is_error():
    with pytest.raises(InputError):
        metrics.openness(0, 5)


# -- report document ------------------------------------------------------------

def test_metrics_report_keys_and_invalid_mapping_omits_acc():
    points = np.array([[0.0, 0], [0.1, 0], [5, 5], [5.1, 5]])
    doc = metrics.metrics_report(points, [0, 0, 1, 1], [3, 3, 4, 4], n_train_classes=12)
    assert set(doc) == {"ss", "ari", "mi", "acc_overall", "acc_per_class",
                        "mapping_valid", "openness"}
    assert doc["mapping_valid"] is True
    bad = metrics.metrics_report(points, [0, 0, 0, 0], [3, 3, 4, 4], n_train_classes=12)
    assert bad["mapping_valid"] is False
    assert "acc_overall" not in bad and "acc_per_class" not in bad
