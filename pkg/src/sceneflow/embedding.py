"""Patch-to-dilated-patch flow embedding and coarse-scale bidirectional matching.

One :class:`FlowEmbedding` runs four aggregation steps for a single scale:

1. max over cross-frame groups of graph features ``[f_i, g_j - f_i]``;
2. max over feature-space neighbours of the step-1 output, fused by an MLP;
3. attention-weighted sum over the reference frame's spatial neighbours of
   the projected fusion ``[f_i, e2_i, sf_i, s_i]``;
4. the same attention over step-3 outputs with fresh weights.

The result is ``e2 + e4``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ContractError,
    DimensionError,
    ParamStore,
    Tensor,
    concat_lastdim,
    constant,
    decide,
    expand_neighbors,
    gather_rows,
    leaky_relu,
    max_over_neighbors,
    reshape,
    softmax,
)
from .geometry import NeighborTable, SizeError, knn_feature
from .nn import MLP, SLOPE, Linear

COSINE_EPS = 1e-8


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def cosine_similarity_matrix(f_p, f_q, eps: float = COSINE_EPS) -> np.ndarray:
    a = _array(f_p).astype(np.float64)
    b = _array(f_q).astype(np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature widths differ: {a.shape} vs {b.shape}")
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    sim = (a @ b.T) / (na[:, None] * nb[None, :] + eps)
    return np.clip(sim, -1.0, 1.0)


@dataclass(frozen=True)
class CorrespondenceMap:
    match: np.ndarray  # target id per point, -1 when unmatched
    bidirectional: np.ndarray  # bool mask
    groups: np.ndarray  # [n, K] target ids used for grouping

    def as_table(self) -> NeighborTable:
        return NeighborTable(self.groups, "euclidean")


def mutual_argmax(sim: np.ndarray) -> np.ndarray:
    """``match[i] = j`` when j is row i's argmax and i is column j's argmax, else -1."""
    row = sim.argmax(axis=1)
    col = sim.argmax(axis=0)
    mutual = col[row] == np.arange(len(sim))
    return np.where(mutual, row, -1)


def bidirectional_match(sim: np.ndarray, fallback: NeighborTable, q_neighbors: NeighborTable | None) -> CorrespondenceMap:
    """One-to-one matches where both sides agree; Euclidean groups elsewhere.

    A matched point's group is the match followed by the match's K-1 nearest
    other target points (``q_neighbors``, self excluded), so every group has
    the same width as the fallback rows.
    """
    if not np.all(np.isfinite(sim)):
        raise ValueError("similarity matrix has non-finite entries")
    k = fallback.k
    match = mutual_argmax(sim)
    matched = match >= 0
    groups = fallback.idx.copy()
    if matched.any():
        rows = np.flatnonzero(matched)
        js = match[rows]
        groups[rows, 0] = js
        if k > 1:
            if q_neighbors is None or q_neighbors.k < k - 1:
                raise ContractError("padding matched groups needs K-1 target neighbours")
            groups[rows, 1:] = q_neighbors.idx[js, : k - 1]
    return CorrespondenceMap(match, matched, groups)


class GraphFeatures:
    """Edge MLP over ``[v_i, v_j - v_i]`` plus the spatial edge offset.

    With ``edge_only`` the centre term ``v_i`` is dropped.
    """

    def __init__(self, store: ParamStore, name: str, width: int, out: int, edge_only: bool, pos_width: int):
        self.edge_only = edge_only
        self.pos_width = pos_width
        d_in = width * (1 if edge_only else 2) + pos_width
        self.mlp = MLP(store, f"{name}.mlp", [d_in, out])

    def __call__(self, center: Tensor, neighbors: Tensor, rel_pos: Tensor | None = None) -> Tensor:
        if center.shape[-1] != neighbors.shape[-1]:
            raise DimensionError("centre and neighbour widths differ")
        n, k, c = neighbors.shape
        edge = neighbors - reshape(center, (n, 1, c))
        parts = [edge] if self.edge_only else [expand_neighbors(center, k), edge]
        if self.pos_width:
            if rel_pos is None:
                raise ContractError("this graph layer expects spatial edge offsets")
            parts.append(rel_pos)
        return self.mlp(concat_lastdim(parts))


class Attention:
    """Softmax over the neighbour axis of a shared two-layer MLP, per channel."""

    def __init__(self, store: ParamStore, name: str, width: int):
        self.hidden = Linear(store, f"{name}.hidden", width, width)
        self.scores = Linear(store, f"{name}.scores", width, width, bias=False, gain=1.0)

    def __call__(self, values: Tensor, neighbors: NeighborTable) -> Tensor:
        grouped = gather_rows(values, neighbors.idx)
        weights = softmax(self.scores(leaky_relu(self.hidden(grouped), SLOPE)), axis=1)
        return (weights * grouped).sum(axis=1)


class FlowEmbedding:
    """Flow embedding for one scale of width ``width``.

    ``upper_width`` is the width of the upsampled flow feature fed in from the
    next coarser scale (0 at the coarsest scale, where no flow exists yet).
    """

    def __init__(
        self,
        store: ParamStore,
        name: str,
        width: int,
        upper_width: int = 0,
        edge_only: bool = False,
        enable_embed2: bool = True,
    ):
        self.width = width
        self.upper_width = upper_width
        self.enable_embed2 = enable_embed2
        self.graph1 = GraphFeatures(store, f"{name}.graph1", width, width, edge_only, pos_width=3)
        if enable_embed2:
            self.graph2 = GraphFeatures(store, f"{name}.graph2", width, width, edge_only, pos_width=0)
            self.fuse2 = MLP(store, f"{name}.fuse2", [2 * width, width])
        fused = 2 * width + (upper_width + 3 if upper_width else 0)
        self.project = MLP(store, f"{name}.project", [fused, width])
        self.att3 = Attention(store, f"{name}.att3", width)
        self.att4 = Attention(store, f"{name}.att4", width)

    def embed1(self, f_p: Tensor, f_q: Tensor, groups: np.ndarray, rel_pos: Tensor) -> Tensor:
        if groups.shape[1] == 0:
            raise ContractError("empty correspondence group")
        return max_over_neighbors(self.graph1(f_p, gather_rows(f_q, groups), rel_pos))

    def embed2(self, e1: Tensor, k: int) -> Tensor:
        if not self.enable_embed2:
            return e1
        if len(e1.data) < k:
            raise SizeError(f"feature-space grouping needs at least K={k} rows")
        idx = decide(lambda: knn_feature(e1.data, e1.data, k).idx)
        e2_hat = max_over_neighbors(self.graph2(e1, gather_rows(e1, idx)))
        return self.fuse2(concat_lastdim([e1, e2_hat]))

    def fuse(self, f_p: Tensor, e2: Tensor, sf_up: Tensor | None, s_up: Tensor | None) -> Tensor:
        parts = [f_p, e2]
        if self.upper_width:
            if sf_up is None or s_up is None:
                raise ContractError("upper scales need the upsampled flow and flow feature")
            parts += [sf_up, s_up]
        return self.project(concat_lastdim(parts))

    def embed3(self, fused: Tensor, n_p: NeighborTable) -> Tensor:
        return self.att3(fused, n_p)

    def embed4(self, e3: Tensor, n_p: NeighborTable) -> Tensor:
        return self.att4(e3, n_p)

    def __call__(
        self,
        f_p: Tensor,
        f_q: Tensor,
        groups: np.ndarray,
        rel_pos: Tensor,
        n_p: NeighborTable,
        sf_up: Tensor | None = None,
        s_up: Tensor | None = None,
    ) -> Tensor:
        e1 = self.embed1(f_p, f_q, groups, rel_pos)
        e2 = self.embed2(e1, n_p.k)
        e3 = self.embed3(self.fuse(f_p, e2, sf_up, s_up), n_p)
        e4 = self.embed4(e3, n_p)
        return e2 + e4


def group_offsets(q_points: np.ndarray, groups: np.ndarray, p_points: np.ndarray, flow: Tensor | None = None) -> Tensor:
    """``q_j - (p_i + s_i)`` per group edge; differentiable in ``flow``."""
    base = constant(q_points[groups] - p_points[:, None, :])
    if flow is None:
        return base
    n = flow.shape[0]
    return base - reshape(flow, (n, 1, 3))
