"""Coarse-to-fine scene flow: embeddings at scales 3, 2, 1, heads, warping, loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ContractError,
    DimensionError,
    ParamStore,
    Tensor,
    decide,
    gather_rows,
    row_norm,
)
from .config import LOSS_WEIGHTS, ModelConfig, ScaleConfig
from .embedding import (
    CorrespondenceMap,
    FlowEmbedding,
    bidirectional_match,
    cosine_similarity_matrix,
    group_offsets,
)
from .encoder import Encoder, FeaturePyramid, extract_pyramid
from .geometry import PointCloud, knn_euclidean, nearest_one
from .nn import MLP


class SceneFlowHead:
    def __init__(self, store: ParamStore, name: str, width: int, hidden=(64, 32)):
        self.mlp = MLP(store, name, [width, *hidden, 3], final_act=False)

    def __call__(self, sf: Tensor) -> Tensor:
        return self.mlp(sf)


def scene_flow_head(head: SceneFlowHead, sf: Tensor) -> Tensor:
    return head(sf)


def upsample_1nn(fine_points: np.ndarray, coarse_points: np.ndarray, values):
    """Copy each fine point's value from its nearest coarse point."""
    idx = nearest_one(fine_points, coarse_points)
    if isinstance(values, Tensor):
        return gather_rows(values, idx)
    return np.asarray(values)[idx]


def warp_forward(points: np.ndarray, flow):
    """``points + flow``; no resampling and no neighbour search."""
    f = flow.data if isinstance(flow, Tensor) else np.asarray(flow)
    if f.shape != points.shape:
        raise DimensionError(f"flow {f.shape} does not match points {points.shape}")
    return points + f


class WarpLayer:
    def __init__(self, scale: int):
        self.scale = scale

    def __call__(self, points: np.ndarray, flow) -> np.ndarray:
        return warp_forward(points, flow)


@dataclass
class MultiScaleOutput:
    flows: dict[int, Tensor]
    flow_features: dict[int, Tensor]
    pyramid_p: FeaturePyramid
    pyramid_q: FeaturePyramid
    coarse_match: CorrespondenceMap | None = None
    trace: list[str] = field(default_factory=list)

    @property
    def full_flow(self) -> np.ndarray:
        return self.flows[0].data


class SceneFlowNet:
    """Shared encoder, three flow embeddings, four heads, two warping layers."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0, store: ParamStore | None = None):
        self.cfg = cfg or ModelConfig()
        self.store = store or ParamStore(seed)
        c = self.cfg.scales.channels
        s = self.store
        self.encoder = Encoder(s, self.cfg.scales)
        fe_kw = dict(edge_only=self.cfg.edge_only, enable_embed2=self.cfg.enable_embed2)
        # ordered coarse to fine: scales 3, 2, 1
        self.flow_embeddings = [
            FlowEmbedding(s, "fe3", c[3], 0, **fe_kw),
            FlowEmbedding(s, "fe2", c[2], c[3], **fe_kw),
            FlowEmbedding(s, "fe1", c[1], c[2], **fe_kw),
        ]
        hw = self.cfg.head_widths
        self.heads = [
            SceneFlowHead(s, "head3", c[3], hw),
            SceneFlowHead(s, "head2", c[2], hw),
            SceneFlowHead(s, "head1", c[1], hw),
        ]
        if self.cfg.l0_head:
            self.heads.append(SceneFlowHead(s, "head0", c[1], hw))
        self.warp_layers = [WarpLayer(2), WarpLayer(1)]

    @property
    def params(self) -> ParamStore:
        return self.store

    def flow_embedding(self, scale: int) -> FlowEmbedding:
        """The embedding for scale 3, 2 or 1; full resolution has none."""
        if scale not in (1, 2, 3):
            raise ContractError(f"no flow embedding runs at scale {scale}")
        return self.flow_embeddings[3 - scale]

    def pyramids(self, p: PointCloud, q: PointCloud, seed: int, scales: ScaleConfig | None = None):
        return extract_pyramid(self.encoder, p, seed, scales), extract_pyramid(self.encoder, q, seed, scales)

    def __call__(self, p: PointCloud, q: PointCloud, seed: int = 0, scales: ScaleConfig | None = None) -> MultiScaleOutput:
        return forward_pass(self, *self.pyramids(p, q, seed, scales))


def _coarse_groups(model: SceneFlowNet, pyr_p: FeaturePyramid, pyr_q: FeaturePyramid, k: int):
    p3, q3 = pyr_p.points[3], pyr_q.points[3]
    fallback = knn_euclidean(p3, q3, k)
    if not model.cfg.bidirectional:
        return fallback.idx, None
    pad = knn_euclidean(q3, q3, k - 1, exclude_self=True) if k > 1 else None

    def compute():
        sim = cosine_similarity_matrix(pyr_p.features[3], pyr_q.features[3])
        cmap = bidirectional_match(sim, fallback, pad)
        return cmap

    cmap = decide(compute)
    return cmap.groups, cmap


def forward_pass(model: SceneFlowNet, pyr_p: FeaturePyramid, pyr_q: FeaturePyramid) -> MultiScaleOutput:
    """Predict flow at scales 3, 2, 1 with embeddings, then carry it to full resolution."""
    if pyr_p.widths != pyr_q.widths:
        raise DimensionError("pyramids disagree in channel widths")
    cfg = model.cfg
    k = pyr_p.neighbors[3].k
    flows: dict[int, Tensor] = {}
    sfs: dict[int, Tensor] = {}
    trace: list[str] = []

    groups, cmap = _coarse_groups(model, pyr_p, pyr_q, k)
    p3, q3 = pyr_p.points[3], pyr_q.points[3]
    sf = model.flow_embedding(3)(
        pyr_p.features[3], pyr_q.features[3], groups, group_offsets(q3, groups, p3), pyr_p.neighbors[3]
    )
    trace.append("fe3")
    flows[3] = model.heads[0](sf)
    sfs[3] = sf
    trace.append("head3")

    for step, scale in enumerate((2, 1), start=1):
        pts, coarse = pyr_p.points[scale], pyr_p.points[scale + 1]
        up = nearest_one(pts, coarse)
        s_up = gather_rows(flows[scale + 1], up)
        sf_up = gather_rows(sfs[scale + 1], up)
        warped = model.warp_layers[step - 1](pts, s_up)
        trace.append(f"warp{scale}")
        q_pts = pyr_q.points[scale]
        n_q = decide(lambda: knn_euclidean(warped, q_pts, k).idx)
        sf = model.flow_embedding(scale)(
            pyr_p.features[scale],
            pyr_q.features[scale],
            n_q,
            group_offsets(q_pts, n_q, pts, s_up),
            pyr_p.neighbors[scale],
            sf_up,
            s_up,
        )
        trace.append(f"fe{scale}")
        flow = model.heads[step](sf)
        if cfg.residual_heads:
            flow = flow + s_up
        flows[scale] = flow
        sfs[scale] = sf
        trace.append(f"head{scale}")

    up0 = nearest_one(pyr_p.points[0], pyr_p.points[1])
    s_up = gather_rows(flows[1], up0)
    if cfg.l0_head:
        flow0 = model.heads[3](gather_rows(sfs[1], up0))
        if cfg.residual_heads:
            flow0 = flow0 + s_up
        trace.append("head0")
    else:
        flow0 = s_up
    flows[0] = flow0
    return MultiScaleOutput(flows, sfs, pyr_p, pyr_q, cmap, trace)


def ground_truth_pyramid(gt_flow: np.ndarray, pyr: FeaturePyramid) -> dict[int, np.ndarray]:
    """Full-resolution flow gathered at each scale's own sampled point ids."""
    gt_flow = np.asarray(gt_flow)
    if len(gt_flow) != len(pyr.points[0]):
        raise DimensionError("ground truth length differs from the reference cloud")
    return {k: gt_flow[idx] for k, idx in enumerate(pyr.source_index)}


def multiscale_loss(flows: dict[int, Tensor], gt: dict[int, np.ndarray], alphas=LOSS_WEIGHTS) -> Tensor:
    """Sum over scales of ``alpha_k * sum_i |s_ki - s_gt,ki|``."""
    total: Tensor | None = None
    for k, pred in sorted(flows.items()):
        target = np.asarray(gt[k])
        if target.shape != pred.shape:
            raise DimensionError(f"scale {k}: prediction {pred.shape} vs ground truth {target.shape}")
        term = row_norm(pred - Tensor(target.astype(pred.dtype))).sum() * alphas[k]
        total = term if total is None else total + term
    if total is None:
        raise ContractError("no scales to score")
    return total
