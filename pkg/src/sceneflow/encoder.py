"""Shared-weight feature pyramid: per-scale LFA blocks and max-pool downsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ParamStore,
    Tensor,
    concat_lastdim,
    constant,
    gather_rows,
    leaky_relu,
    max_over_neighbors,
    softmax,
)
from .config import ResolutionError, ScaleConfig
from .geometry import NeighborTable, PointCloud, SampleIndices, SizeError, knn_euclidean, sample
from .nn import MLP, SLOPE, Linear


def scale_seed(seed: int, scale: int) -> int:
    return int(np.random.SeedSequence([seed, scale]).generate_state(1)[0])


def relative_geometry(points: np.ndarray, neighbors: NeighborTable, include_absolute: bool = False) -> Tensor:
    """Per-edge ``[p_j - p_i, |p_j - p_i|]`` (optionally prefixed by ``p_i, p_j``)."""
    nbr = points[neighbors.idx]
    offset = nbr - points[:, None, :]
    dist = np.sqrt((offset**2).sum(axis=-1, keepdims=True))
    parts = [offset, dist]
    if include_absolute:
        parts = [np.broadcast_to(points[:, None, :], nbr.shape), nbr] + parts
    return constant(np.concatenate(parts, axis=-1))


def geometry_width(include_absolute: bool) -> int:
    return 10 if include_absolute else 4


class AttentiveUnit:
    """Local spatial encoding followed by attentive pooling."""

    def __init__(self, store: ParamStore, name: str, d_feat: int, d_pos: int, d_out: int, geo_width: int):
        self.pos_mlp = MLP(store, f"{name}.pos", [geo_width, d_pos])
        enc = d_pos + d_feat
        self.score = Linear(store, f"{name}.score", enc, enc, bias=False, gain=1.0)
        self.out = MLP(store, f"{name}.out", [enc, d_out])

    def encode(self, features: Tensor, geometry: Tensor, neighbors: NeighborTable) -> Tensor:
        return concat_lastdim([self.pos_mlp(geometry), gather_rows(features, neighbors.idx)])

    def pool(self, encoded: Tensor) -> Tensor:
        weights = softmax(self.score(encoded), axis=1)
        return self.out((weights * encoded).sum(axis=1))

    def __call__(self, features: Tensor, geometry: Tensor, neighbors: NeighborTable) -> Tensor:
        return self.pool(self.encode(features, geometry, neighbors))


class LFABlock:
    """Two chained attentive units plus a linear shortcut."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int, mid_ratio: float, include_absolute: bool):
        mid = max(1, int(round(d_out * mid_ratio)))
        gw = geometry_width(include_absolute)
        self.include_absolute = include_absolute
        self.unit1 = AttentiveUnit(store, f"{name}.unit1", d_in, mid, mid, gw)
        self.unit2 = AttentiveUnit(store, f"{name}.unit2", mid, mid, d_out, gw)
        self.shortcut = Linear(store, f"{name}.shortcut", d_in, d_out)
        self.d_out = d_out

    def __call__(self, points: np.ndarray, features: Tensor, neighbors: NeighborTable) -> Tensor:
        geo = relative_geometry(points, neighbors, self.include_absolute)
        h = self.unit1(features, geo, neighbors)
        h = self.unit2(h, geo, neighbors)
        return leaky_relu(h + self.shortcut(features), SLOPE)


class Downsample:
    """Max over the K_p finer-scale neighbours of each kept point, then an MLP."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int):
        self.mlp = MLP(store, f"{name}.mlp", [d_in, d_out])

    def __call__(self, points: np.ndarray, features: Tensor, target: SampleIndices, k: int):
        if k > len(points):
            raise SizeError(f"K_p={k} exceeds the {len(points)} points being downsampled")
        kept = points[target.indices]
        nbrs = knn_euclidean(kept, points, k)
        pooled = max_over_neighbors(gather_rows(features, nbrs.idx))
        return kept, self.mlp(pooled), nbrs


@dataclass
class FeaturePyramid:
    points: list[np.ndarray]
    features: list[Tensor]
    samples: list[SampleIndices | None]
    neighbors: list[NeighborTable | None]
    source_index: list[np.ndarray]  # ids into the scale-0 cloud

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.points)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.features)


class Encoder:
    """One set of weights, applied to both frames."""

    def __init__(self, store: ParamStore, cfg: ScaleConfig, name: str = "encoder"):
        c = cfg.channels
        self.cfg = cfg
        self.lift = MLP(store, f"{name}.lift", [3, c[0]])
        self.down = [Downsample(store, f"{name}.down{k}", c[k - 1], c[k]) for k in (1, 2, 3)]
        self.lfa = [
            LFABlock(store, f"{name}.lfa{k}", c[k], c[k], cfg.lfa_mid_ratio, cfg.include_absolute_xyz)
            for k in (1, 2, 3)
        ]

    def __call__(self, cloud: PointCloud, seed: int, cfg: ScaleConfig | None = None) -> FeaturePyramid:
        return extract_pyramid(self, cloud, seed, cfg)


def extract_pyramid(encoder: Encoder, cloud: PointCloud, seed: int, cfg: ScaleConfig | None = None) -> FeaturePyramid:
    """Scale-0 lift, then sample / downsample / LFA for scales 1..3.

    ``cfg`` may override resolutions, K_p and the sampler at inference time;
    the channel schedule must match the encoder's weights.
    """
    cfg = cfg or encoder.cfg
    if cfg.channels != encoder.cfg.channels:
        raise ValueError("channel schedule differs from the encoder's weights")
    pts = cloud.points
    if len(pts) < cfg.resolutions[0]:
        raise ResolutionError(f"{len(pts)} points cannot feed l1={cfg.resolutions[0]}")
    # centring keeps the lift independent of absolute position
    centred = pts - pts.mean(axis=0)
    feats = encoder.lift(constant(centred))
    pyr = FeaturePyramid([pts], [feats], [None], [None], [np.arange(len(pts))])
    for k in (1, 2, 3):
        prev_pts = pyr.points[-1]
        picked = sample(prev_pts, cfg.resolutions[k - 1], cfg.sampler, scale_seed(seed, k))
        kept, pooled, _ = encoder.down[k - 1](prev_pts, pyr.features[-1], picked, cfg.k_neighbors)
        intra = knn_euclidean(kept, kept, cfg.k_neighbors)
        out = encoder.lfa[k - 1](kept, pooled, intra)
        pyr.points.append(kept)
        pyr.features.append(out)
        pyr.samples.append(picked)
        pyr.neighbors.append(intra)
        pyr.source_index.append(pyr.source_index[-1][picked.indices])
    return pyr
