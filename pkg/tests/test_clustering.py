import itertools
import json

import numpy as np
import pytest

from plud.clustering import (
    AgglomerativeClusterer,
    ClusterConfig,
    ClusterSet,
    KMeansClusterer,
    cluster_items,
    default_k,
    majority_label,
    purity,
)

FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def wcss_of_partition(X: np.ndarray, groups) -> float:
    total = 0.0
    for rows in groups:
        if not rows:
            continue
        block = X[list(rows)]
        centroid = block.mean(axis=0)
        total += float(((block - centroid) ** 2).sum())
    return total


def brute_force_two_partition(X: np.ndarray) -> tuple[float, frozenset]:
    """Exhaustive minimum-WCSS bipartition (the k=2 global optimum)."""
    n = len(X)
    best = (np.inf, None)
    for size in range(1, n // 2 + 1):
        for combo in itertools.combinations(range(n), size):
            rest = tuple(i for i in range(n) if i not in combo)
            w = wcss_of_partition(X, [combo, rest])
            if w < best[0]:
                best = (w, frozenset(combo))
    return best


def linkage_distance(X, a, b, linkage):
    dists = [
        float(np.linalg.norm(X[i] - X[j])) for i in a for j in b
    ]
    if linkage == "AVERAGE":
        return sum(dists) / len(dists)
    if linkage == "SINGLE":
        return min(dists)
    return max(dists)


def reference_agglomerative(X, k, linkage):
    """Literal bottom-up merging recomputed from raw pair distances."""
    clusters = [[i] for i in range(len(X))]
    while len(clusters) > k:
        best = None
        for ai in range(len(clusters)):
            for bi in range(ai + 1, len(clusters)):
                d = linkage_distance(X, clusters[ai], clusters[bi], linkage)
                key = (d, min(clusters[ai]), min(clusters[bi]))
                if best is None or key < best[0]:
                    best = (key, ai, bi)
        _, ai, bi = best
        merged = sorted(clusters[ai] + clusters[bi])
        clusters = [c for i, c in enumerate(clusters) if i not in (ai, bi)]
        clusters.append(merged)
    return sorted([sorted(c) for c in clusters], key=lambda c: c[0])


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


class TestKMeans:
    def test_four_points_matches_brute_force(self):
        est = KMeansClusterer(k=2, seed=0).fit(FOUR_POINTS)
        optimum, side = brute_force_two_partition(FOUR_POINTS)
        assert optimum == pytest.approx(1.0)
        assert est.inertia_ == pytest.approx(optimum)
        groups = {frozenset(np.flatnonzero(est.labels_ == c)) for c in range(2)}
        assert groups == {frozenset({0, 1}), frozenset({2, 3})}
        centers = sorted(est.cluster_centers_.tolist())
        assert centers == [[0.0, 0.5], [10.0, 10.5]]

    def test_k_one_gives_column_mean(self):
        est = KMeansClusterer(k=1, seed=3).fit(FOUR_POINTS)
        np.testing.assert_allclose(
            est.cluster_centers_[0], FOUR_POINTS.mean(axis=0)
        )
        assert set(est.labels_) == {0}

    def test_k_equals_n_zero_wcss(self):
        est = KMeansClusterer(k=4, seed=1).fit(FOUR_POINTS)
        assert est.inertia_ == pytest.approx(0.0, abs=1e-12)
        assert sorted(est.labels_) == [0, 1, 2, 3]

    def test_k_exceeding_n_rejected(self):
        with pytest.raises(ValueError, match="k=9"):
            KMeansClusterer(k=9).fit(FOUR_POINTS)

    def test_non_finite_rejected(self):
        bad = FOUR_POINTS.copy()
        bad[1, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            KMeansClusterer(k=2).fit(bad)

    def test_deterministic_for_fixed_config(self):
        X = np.random.default_rng(5).standard_normal((60, 6))
        a = KMeansClusterer(k=5, seed=9).fit(X)
        b = KMeansClusterer(k=5, seed=9).fit(X)
        assert a.labels_.tobytes() == b.labels_.tobytes()
        assert a.cluster_centers_.tobytes() == b.cluster_centers_.tobytes()
        assert a.inertia_ == b.inertia_

    def test_wcss_history_non_increasing(self):
        X = np.random.default_rng(7).standard_normal((200, 4))
        est = KMeansClusterer(k=6, seed=2).fit(X)
        hist = est.wcss_history_
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_assignment_consistency_on_return(self):
        X = np.random.default_rng(8).standard_normal((120, 3))
        est = KMeansClusterer(k=4, seed=4).fit(X)
        d2 = ((X[:, None, :] - est.cluster_centers_[None]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(est.labels_, np.argmin(d2, axis=1))

    def test_small_instance_optimality(self):
        hits = 0
        for seed in range(30):
            X = np.random.default_rng(1000 + seed).standard_normal((8, 2))
            est = KMeansClusterer(k=2, seed=seed, restarts=10).fit(X)
            optimum, _ = brute_force_two_partition(X)
            if est.inertia_ <= 1.0001 * optimum:
                hits += 1
        assert hits >= int(0.95 * 30)

    def test_predict_routes_to_nearest_center(self):
        est = KMeansClusterer(k=2, seed=0).fit(FOUR_POINTS)
        got = est.predict(np.array([[0.1, 0.4], [9.5, 10.2]]))
        assert est.labels_[0] == got[0]
        assert est.labels_[2] == got[1]


# ---------------------------------------------------------------------------
# agglomerative
# ---------------------------------------------------------------------------


class TestAgglomerative:
    def test_four_points_average_matches_reference(self):
        est = AgglomerativeClusterer(k=2, linkage="AVERAGE").fit(FOUR_POINTS)
        groups = sorted(
            sorted(np.flatnonzero(est.labels_ == c).tolist()) for c in range(2)
        )
        assert groups == reference_agglomerative(FOUR_POINTS, 2, "AVERAGE")
        assert groups == [[0, 1], [2, 3]]

    @pytest.mark.parametrize("linkage", ["AVERAGE", "SINGLE", "COMPLETE"])
    def test_random_instances_match_reference(self, linkage):
        for seed in range(8):
            X = np.random.default_rng(200 + seed).standard_normal((10, 3))
            k = 3
            est = AgglomerativeClusterer(k=k, linkage=linkage).fit(X)
            groups = sorted(
                sorted(np.flatnonzero(est.labels_ == c).tolist()) for c in range(k)
            )
            assert groups == reference_agglomerative(X, k, linkage), (
                f"seed {seed} linkage {linkage}"
            )

    def test_k_equals_n_singletons(self):
        est = AgglomerativeClusterer(k=4).fit(FOUR_POINTS)
        assert sorted(est.labels_) == [0, 1, 2, 3]
        assert est.inertia_ == pytest.approx(0.0, abs=1e-12)

    def test_identical_points_merge_first(self):
        X = np.array([[5.0, 5.0], [0.0, 0.0], [5.0, 5.0]])
        est = AgglomerativeClusterer(k=2).fit(X)
        assert est.merge_sequence_[0] == (0, 2)
        assert est.labels_[0] == est.labels_[2] != est.labels_[1]

    def test_centroids_are_member_means(self):
        est = AgglomerativeClusterer(k=2).fit(FOUR_POINTS)
        for c in range(2):
            rows = FOUR_POINTS[est.labels_ == c]
            np.testing.assert_allclose(est.cluster_centers_[c], rows.mean(axis=0))


# ---------------------------------------------------------------------------
# cluster_items / ClusterSet
# ---------------------------------------------------------------------------


class TestClusterItems:
    def test_partition_and_json(self):
        ids = [f"item{i}" for i in range(4)]
        cs = cluster_items(FOUR_POINTS, ids, ClusterConfig(k=2, seed=0))
        flat = sorted(i for c in cs.clusters for i in c)
        assert flat == sorted(ids)
        doc = json.loads(cs.to_json())
        assert doc["wcss"] == pytest.approx(1.0)
        assert doc["config"]["algorithm"] == "KMEANS"

    def test_partition_violation_caught(self):
        with pytest.raises(AssertionError, match="partition"):
            ClusterSet(
                clusters=[["a", "b"], ["b"]], centroids=np.zeros((2, 2)), wcss=0.0
            )

    def test_default_k_rule(self):
        assert default_k(1000) == 22
        assert default_k(4) == 2

    def test_agglomerative_route(self):
        ids = list("abcd")
        cs = cluster_items(
            FOUR_POINTS, ids, ClusterConfig(algorithm="AGGLOMERATIVE", k=2)
        )
        members = {frozenset(c) for c in cs.clusters}
        assert members == {frozenset({"a", "b"}), frozenset({"c", "d"})}


# ---------------------------------------------------------------------------
# majority / purity
# ---------------------------------------------------------------------------


class TestMajorityAndPurity:
    def test_majority_basic(self):
        assert majority_label(["Hand", "Hand", "Arm"]) == ("Hand", pytest.approx(2 / 3))

    def test_majority_tie_lexicographic(self):
        assert majority_label(["Arm", "Hand"]) == ("Arm", 0.5)

    def test_majority_unanimous(self):
        assert majority_label(["Stake"] * 5) == ("Stake", 1.0)

    def test_majority_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_label([])

    def test_purity_perfect(self):
        cs = ClusterSet(
            clusters=[["a", "b"], ["c", "d"]], centroids=np.zeros((2, 2)), wcss=0.0
        )
        truth = {"a": "X", "b": "X", "c": "Y", "d": "Y"}
        assert purity(cs, truth) == 1.0

    def test_purity_three_quarters(self):
        cs = ClusterSet(clusters=[list("abcd")], centroids=np.zeros((1, 2)), wcss=0.0)
        truth = {"a": "A", "b": "A", "c": "A", "d": "B"}
        assert purity(cs, truth) == 0.75

    def test_purity_missing_truth(self):
        cs = ClusterSet(clusters=[["a"]], centroids=np.zeros((1, 2)), wcss=0.0)
        with pytest.raises(KeyError):
            purity(cs, {})

    def test_random_shuffle_purity_near_chance(self):
        # Monte-Carlo oracle: balanced 10-class truth shuffled at random has
        # purity around 1/10 (plus the expected-maximum inflation of the
        # modal count), comfortably inside 0.10 +/- 0.05.
        rng = np.random.default_rng(42)
        X = rng.standard_normal((1000, 8))
        ids = [f"i{n}" for n in range(1000)]
        cs = cluster_items(X, ids, ClusterConfig(k=10, seed=0, restarts=3))
        labels = np.repeat([f"c{j}" for j in range(10)], 100)
        values = []
        for shuffle_seed in range(5):
            shuffled = np.random.default_rng(shuffle_seed).permutation(labels)
            truth = dict(zip(ids, shuffled))
            values.append(purity(cs, truth))
        mean_purity = float(np.mean(values))
        assert 0.05 <= mean_purity <= 0.15
