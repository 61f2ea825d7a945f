import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sceneflow.autodiff import DimensionError
from sceneflow.geometry import (
    PointCloud,
    SizeError,
    build_spatial_index,
    farthest_point_sample,
    knn_euclidean,
    knn_feature,
    random_sample,
    sample,
)


def brute_knn(query, target, k, exclude_self=False):
    """Sort every target by (squared distance, id) with a plain Python key."""
    out = []
    for i, q in enumerate(query):
        d2 = ((target - q) ** 2).sum(axis=1)
        ids = [j for j in range(len(target)) if not (exclude_self and j == i)]
        ids.sort(key=lambda j: (d2[j], j))
        out.append(ids[:k])
    return np.array(out, dtype=np.int64)


def naive_fps(points, m, start):
    chosen = [start]
    while len(chosen) < m:
        best, best_d = None, -1.0
        for j in range(len(points)):
            if j in chosen:
                continue
            d = min(float(((points[j] - points[c]) ** 2).sum()) for c in chosen)
            if d > best_d:
                best, best_d = j, d
        chosen.append(best)
    return chosen


def min_pairwise(points):
    d = np.sqrt(((points[:, None] - points[None]) ** 2).sum(-1))
    d[np.diag_indices(len(points))] = np.inf
    return d.min()


# --- PointCloud -------------------------------------------------------------------


def test_point_cloud_contract():
    with pytest.raises(DimensionError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(SizeError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]))
    with pytest.raises(DimensionError):
        PointCloud(np.zeros((4, 3)), occluded=np.zeros(3, bool))


# --- random sampling ------------------------------------------------------------------


def test_rs_full_draw_is_permutation():
    idx = random_sample(np.zeros((50, 3)), 50, seed=3).indices
    assert sorted(idx.tolist()) == list(range(50))


def test_rs_deterministic_and_unique():
    pts = np.random.default_rng(0).normal(size=(200, 3))
    a = random_sample(pts, 40, seed=11).indices
    b = random_sample(pts, 40, seed=11).indices
    np.testing.assert_array_equal(a, b)
    assert len(set(a.tolist())) == 40


def test_rs_size_error():
    with pytest.raises(SizeError):
        random_sample(np.zeros((5, 3)), 6, 0)
    with pytest.raises(SizeError):
        farthest_point_sample(np.zeros((5, 3)), 0, 0)


def _rs_counts(trials=10_000, n=100, m=10):
    counts = np.zeros(n)
    pts = np.zeros((n, 3))
    for t in range(trials):
        counts[random_sample(pts, m, seed=t).indices] += 1
    return counts


def test_rs_frequencies_within_three_sigma():
    # each point's inclusion count over independent trials is Binomial(T, m/n)
    trials, n, m = 10_000, 100, 10
    counts = _rs_counts(trials, n, m)
    p = m / n
    sigma = np.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(counts - trials * p) <= 3 * sigma)


def test_rs_chi_square_uniform():
    counts = _rs_counts()
    _, pvalue = stats.chisquare(counts)
    assert pvalue > 0.01


# --- farthest point sampling ----------------------------------------------------------


def test_fps_square_diagonal():
    square = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
    for seed in range(100):
        s = farthest_point_sample(square, 2, seed).indices
        if s[0] == 0:
            assert s[1] == 3
            return
    pytest.fail("no seed started at corner 0")


def test_fps_full_draw_is_permutation():
    pts = np.random.default_rng(1).normal(size=(30, 3))
    assert sorted(farthest_point_sample(pts, 30, 5).indices.tolist()) == list(range(30))


@pytest.mark.parametrize("seed", range(10))
def test_fps_matches_naive_greedy(seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(64, 3))
    got = farthest_point_sample(pts, 8, seed).indices
    assert got.tolist() == naive_fps(pts, 8, int(got[0]))
    assert got[0] == np.random.default_rng(seed).integers(64)


def test_fps_ties_go_to_lowest_id():
    grid = np.array([[x, y, 0] for x in range(3) for y in range(3)], float)
    got = farthest_point_sample(grid, 9, 0).indices
    assert got.tolist() == naive_fps(grid, 9, int(got[0]))


def test_fps_coverage_beats_rs():
    wins = 0
    for t in range(100):
        pts = np.random.default_rng(t).uniform(0, 1, size=(512, 3))
        f = pts[farthest_point_sample(pts, 32, t).indices]
        r = pts[random_sample(pts, 32, t).indices]
        wins += min_pairwise(f) >= min_pairwise(r)
    assert wins >= 95


def test_sample_dispatch():
    pts = np.random.default_rng(0).normal(size=(20, 3))
    assert sample(pts, 5, "rs", 1).method == "rs"
    assert sample(pts, 5, "fps", 1).method == "fps"
    with pytest.raises(ValueError):
        sample(pts, 5, "grid", 1)


# --- Euclidean kNN ------------------------------------------------------------------


def test_knn_single_point():
    index = build_spatial_index(np.array([[1.0, 2.0, 3.0]]))
    q = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(index.query(q, 1), 0)


def test_knn_colinear_both_conventions():
    line = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], float)
    assert knn_euclidean(line, line, 2, exclude_self=True).idx[0].tolist() == [1, 2]
    assert knn_euclidean(line, line, 2).idx[0].tolist() == [0, 1]


def test_knn_k_equals_target_size():
    pts = np.random.default_rng(2).normal(size=(12, 3))
    q = np.random.default_rng(3).normal(size=(4, 3))
    np.testing.assert_array_equal(knn_euclidean(q, pts, 12).idx, brute_knn(q, pts, 12))


def test_knn_duplicates_ordered_by_id():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0], [1, 0, 0], [0, 0, 0]], float)
    assert knn_euclidean(np.zeros((1, 3)), pts, 5).idx[0].tolist() == [0, 2, 4, 1, 3]


def test_knn_size_error():
    with pytest.raises(SizeError):
        knn_euclidean(np.zeros((1, 3)), np.zeros((3, 3)), 4)
    with pytest.raises(SizeError):
        knn_euclidean(np.zeros((3, 3)), np.zeros((3, 3)), 3, exclude_self=True)


def test_knn_2048_k20_matches_brute_force():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-5, 5, size=(2048, 3))
    q = pts[rng.choice(2048, 200, replace=False)]
    np.testing.assert_array_equal(build_spatial_index(pts).query(q, 20), brute_knn(q, pts, 20))


def test_knn_4096_k16_matches_brute_force():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(4096, 3))
    q = rng.normal(size=(150, 3))
    np.testing.assert_array_equal(knn_euclidean(q, pts, 16).idx, brute_knn(q, pts, 16))


@given(
    st.integers(1, 60),
    st.integers(1, 8),
    st.integers(0, 2**31 - 1),
    st.booleans(),
)
@settings(max_examples=60, deadline=None)
def test_knn_grid_ties_property(n, k, seed, exclude):
    # integer lattice coordinates make equal distances common
    rng = np.random.default_rng(seed)
    pts = rng.integers(-2, 3, size=(n, 3)).astype(float)
    k = min(k, n - 1 if exclude else n)
    if k < 1:
        return
    got = knn_euclidean(pts, pts, k, exclude_self=exclude).idx
    np.testing.assert_array_equal(got, brute_knn(pts, pts, k, exclude))


def test_knn_permutation_covariant():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(300, 3))
    q = rng.normal(size=(20, 3))
    perm = rng.permutation(300)
    a = knn_euclidean(q, pts, 8).idx
    b = perm[knn_euclidean(q, pts[perm], 8).idx]
    assert [set(r) for r in a.tolist()] == [set(r) for r in b.tolist()]


# --- feature-space kNN ------------------------------------------------------------


def test_knn_feature_self_match():
    f = np.random.default_rng(7).normal(size=(40, 16))
    np.testing.assert_array_equal(knn_feature(f, f, 1).idx[:, 0], np.arange(40))


def test_knn_feature_one_hot():
    target = np.eye(4)
    query = np.array([[0.0, 0.9, 0.3, 0.1]])
    # distance^2 to e_j is |q|^2 + 1 - 2 q_j: smaller for larger q_j
    assert knn_feature(query, target, 4).idx[0].tolist() == [1, 2, 3, 0]


def test_knn_feature_dimension_mismatch():
    with pytest.raises(DimensionError):
        knn_feature(np.zeros((3, 4)), np.zeros((3, 5)), 1)


def test_knn_feature_512x64_matches_brute_force():
    rng = np.random.default_rng(8)
    t = rng.normal(size=(512, 64))
    q = rng.normal(size=(100, 64))
    np.testing.assert_array_equal(knn_feature(q, t, 16, block=37).idx, brute_knn(q, t, 16))


def test_knn_feature_duplicate_rows():
    rng = np.random.default_rng(9)
    base = rng.normal(size=(10, 8))
    t = np.concatenate([base, base, base])
    np.testing.assert_array_equal(knn_feature(base, t, 12).idx, brute_knn(base, t, 12))
