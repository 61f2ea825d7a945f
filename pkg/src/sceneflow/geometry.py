"""Point containers, random / farthest-point sampling and exact kNN.

Every neighbour row is ordered by ascending distance with ties broken by
ascending target id. Distances used for ordering are always recomputed with
the same direct formula, ``sum((a - b) ** 2)`` in float64, so results are
reproducible regardless of which search structure proposed the candidates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from .autodiff import DimensionError

Sampler = Literal["rs", "fps"]


class SizeError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    features: np.ndarray | None = None
    occluded: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DimensionError(f"points must be [N, 3], got {self.points.shape}")
        if len(self.points) < 1:
            raise SizeError("a point cloud needs at least one point")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if self.features is not None and len(self.features) != len(self.points):
            raise DimensionError("features and points disagree in length")
        if self.occluded is not None:
            self.occluded = np.asarray(self.occluded, dtype=bool)
            if self.occluded.shape != (len(self.points),):
                raise DimensionError("occlusion mask length must equal N")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SampleIndices:
    indices: np.ndarray
    method: str
    seed: int


@dataclass(frozen=True)
class NeighborTable:
    idx: np.ndarray
    space: str = "euclidean"

    @property
    def k(self) -> int:
        return self.idx.shape[1]

    def __len__(self) -> int:
        return len(self.idx)


def _as_points(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.points
    return np.asarray(x, dtype=np.float64)


# --- sampling ---------------------------------------------------------------


def random_sample(cloud, m: int, seed: int) -> SampleIndices:
    n = len(_as_points(cloud))
    if not 1 <= m <= n:
        raise SizeError(f"cannot draw {m} samples from {n} points")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=m, replace=False)
    return SampleIndices(idx.astype(np.int64), "rs", seed)


def farthest_point_sample(cloud, m: int, seed: int) -> SampleIndices:
    """Greedy max-min sampling from a seeded random start (ties -> lowest id)."""
    pts = _as_points(cloud)
    n = len(pts)
    if not 1 <= m <= n:
        raise SizeError(f"cannot draw {m} samples from {n} points")
    rng = np.random.default_rng(seed)
    out = np.empty(m, dtype=np.int64)
    out[0] = rng.integers(n)
    min_d = np.full(n, np.inf)
    for i in range(1, m):
        d = ((pts - pts[out[i - 1]]) ** 2).sum(axis=1)
        np.minimum(min_d, d, out=min_d)
        min_d[out[i - 1]] = -np.inf
        out[i] = int(np.argmax(min_d))
    return SampleIndices(out, "fps", seed)


def sample(cloud, m: int, method: Sampler, seed: int) -> SampleIndices:
    if method == "rs":
        return random_sample(cloud, m, seed)
    if method == "fps":
        return farthest_point_sample(cloud, m, seed)
    raise ValueError(f"unknown sampler {method!r}")


# --- exact neighbour search -------------------------------------------------


def _sq_dists(query: np.ndarray, target: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Direct squared distances from ``query[i]`` to ``target[cand[i, j]]``."""
    return ((target[cand] - query[:, None, :]) ** 2).sum(axis=-1)


def _order_rows(d2: np.ndarray, cand: np.ndarray, k: int) -> np.ndarray:
    order = np.lexsort((cand, d2), axis=-1)[:, :k]
    return np.take_along_axis(cand, order, axis=1)


def _full_rows(query: np.ndarray, target: np.ndarray, rows: np.ndarray, k: int, exclude: np.ndarray | None) -> np.ndarray:
    out = np.empty((len(rows), k), dtype=np.int64)
    all_ids = np.arange(len(target))
    for r, i in enumerate(rows):
        d2 = ((target - query[i]) ** 2).sum(axis=1)
        ids = all_ids
        if exclude is not None:
            keep = ids != exclude[i]
            d2, ids = d2[keep], ids[keep]
        out[r] = _order_rows(d2[None], ids[None], k)[0]
    return out


class SpatialIndex:
    """kd-tree over 3D points answering exact kNN under the (distance, id) order."""

    def __init__(self, points, leafsize: int = 16):
        self.points = np.ascontiguousarray(_as_points(points), dtype=np.float64)
        if len(self.points) < 1:
            raise SizeError("cannot index an empty point set")
        self.leafsize = leafsize
        self._tree = cKDTree(self.points, leafsize=leafsize)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, query, k: int, exclude_self: bool = False) -> np.ndarray:
        query = np.ascontiguousarray(_as_points(query), dtype=np.float64)
        n = len(self.points)
        need = k + (1 if exclude_self else 0)
        if k < 1 or need > n:
            raise SizeError(f"K={k} neighbours requested from {n} target points")
        exclude = np.arange(len(query)) if exclude_self else None
        if exclude_self and len(query) != n:
            raise SizeError("exclude_self needs the query set to be the target set")
        extra = min(n, need + 4)
        tree_d, cand = self._tree.query(query, k=extra)
        tree_d = tree_d.reshape(len(query), extra)
        cand = cand.reshape(len(query), extra).astype(np.int64)
        d2 = _sq_dists(query, self.points, cand)
        if exclude is not None:
            d2 = np.where(cand == exclude[:, None], np.inf, d2)
        result = _order_rows(d2, cand, k)
        if extra == n:
            return result
        # Points outside the candidate set lie at tree distance >= the largest
        # candidate distance; rows whose k-th distance is not strictly below
        # that bound may hide a tie and are redone by exhaustive search.
        kth = np.take_along_axis(d2, np.lexsort((cand, d2), axis=-1)[:, k - 1 : k], axis=1)[:, 0]
        bound = tree_d[:, -1] ** 2
        unsafe = np.flatnonzero(~(kth < bound * (1.0 - 1e-9)))
        if len(unsafe):
            result[unsafe] = _full_rows(query, self.points, unsafe, k, exclude)
        return result


def build_spatial_index(points, leafsize: int = 16) -> SpatialIndex:
    return SpatialIndex(points, leafsize)


def knn_euclidean(query, target, k: int, exclude_self: bool = False) -> NeighborTable:
    """K nearest target points for every query point.

    ``target`` may be a prebuilt :class:`SpatialIndex` or raw points. A query
    point that coincides with a target point gets it as a 0-distance
    neighbour unless ``exclude_self`` is set (query set must equal target set).
    """
    index = target if isinstance(target, SpatialIndex) else SpatialIndex(target)
    return NeighborTable(index.query(query, k, exclude_self), "euclidean")


def knn_feature(query_feats, target_feats, k: int, block: int = 1024) -> NeighborTable:
    """Exact L2 kNN in feature space without an index."""
    q = np.asarray(query_feats, dtype=np.float64)
    t = np.asarray(target_feats, dtype=np.float64)
    if q.ndim != 2 or t.ndim != 2 or q.shape[1] != t.shape[1]:
        raise DimensionError(f"feature widths differ: {q.shape} vs {t.shape}")
    m = len(t)
    if not 1 <= k <= m:
        raise SizeError(f"K={k} neighbours requested from {m} targets")
    extra = min(m, k + 8)
    tn = (t * t).sum(axis=1)
    out = np.empty((len(q), k), dtype=np.int64)
    for start in range(0, len(q), block):
        qb = q[start : start + block]
        qn = (qb * qb).sum(axis=1)
        approx = qn[:, None] + tn[None, :] - 2.0 * (qb @ t.T)
        if extra < m:
            cand = np.argpartition(approx, extra - 1, axis=1)[:, :extra]
            cut = np.take_along_axis(approx, cand, axis=1).max(axis=1)
        else:
            cand = np.broadcast_to(np.arange(m), (len(qb), m))
            cut = np.full(len(qb), np.inf)
        d2 = _sq_dists(qb, t, cand)
        rows = _order_rows(d2, cand, k)
        if extra < m:
            kth = np.sort(d2, axis=1)[:, k - 1]
            slack = 1e-12 * (qn + tn.max()) + 1e-300
            unsafe = np.flatnonzero(~(kth < cut - slack))
            if len(unsafe):
                rows[unsafe] = _full_rows(qb, t, unsafe, k, None)
        out[start : start + block] = rows
    return NeighborTable(out, "feature")


def nearest_one(query, target) -> np.ndarray:
    """Index of the single nearest target point per query (ties -> lowest id)."""
    return knn_euclidean(query, target, 1).idx[:, 0]
