"""Synthetic rigid-motion scene pairs with exact ground-truth flow.

Each object is a sampled surface (a flat plane patch, a box shell or a
bumpy blob) placed at a random pose. Frame t+1 applies one rigid motion per
object, rotating about the object's centre. Flow is the displacement of
every frame-t point under its object's motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ConfigError
from ..geometry import PointCloud, knn_euclidean

KINDS = ("plane", "box", "blob")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    num_objects: int = 3
    kinds: tuple[str, ...] = KINDS
    points_per_object: int = 1024
    rotation_deg: float = 10.0
    rotation_axes: str = "xyz"
    translation: float = 0.5
    occlusion_fraction: float = 0.0
    resample_independently: bool = False
    depth_limit: float = 35.0  # metres along z; 0 disables the filter
    extent: float = 3.0
    depth_range: tuple[float, float] = (4.0, 12.0)
    object_size: float = 1.5

    def __post_init__(self):
        if not 0 <= self.rotation_deg <= 30:
            raise ConfigError("rotation range must stay within +-30 degrees")
        if self.translation < 0:
            raise ConfigError("translation bound must be non-negative")
        if not 0 <= self.occlusion_fraction < 1:
            raise ConfigError("occlusion fraction must lie in [0, 1)")
        bad = set(self.kinds) - set(KINDS)
        if bad or not self.kinds:
            raise ConfigError(f"unknown object kinds {sorted(bad)}")
        if set(self.rotation_axes) - set("xyz"):
            raise ConfigError("rotation axes must be a subset of 'xyz'")
        if self.num_objects < 1 or self.points_per_object < 1:
            raise ConfigError("need at least one object with one point")


@dataclass
class RigidMotion:
    rotation: np.ndarray  # 3x3
    angles_deg: np.ndarray  # about x, y, z
    center: np.ndarray
    translation: np.ndarray

    def displacement(self, pts: np.ndarray) -> np.ndarray:
        # written as an offset so identity / pure-translation motions are exact
        return (pts - self.center) @ (self.rotation - np.eye(3)).T + self.translation

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return pts + self.displacement(pts)


@dataclass
class Scene:
    """A frame pair; arrays are float32 so file round trips are exact."""

    p: np.ndarray
    q: np.ndarray
    flow: np.ndarray | None = None
    occluded: np.ndarray | None = None
    motions: list[RigidMotion] = field(default_factory=list, repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)  # object id per P point

    def __post_init__(self):
        self.p = np.ascontiguousarray(self.p, dtype=np.float32)
        self.q = np.ascontiguousarray(self.q, dtype=np.float32)
        if self.flow is not None:
            self.flow = np.ascontiguousarray(self.flow, dtype=np.float32)
        if self.occluded is not None:
            self.occluded = np.asarray(self.occluded, dtype=bool)

    @property
    def cloud_p(self) -> PointCloud:
        return PointCloud(self.p, occluded=self.occluded)

    @property
    def cloud_q(self) -> PointCloud:
        return PointCloud(self.q)


def rotation_matrix(angles_deg) -> np.ndarray:
    ax, ay, az = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


# --- surfaces in local coordinates ----------------------------------------


def _plane(rng, n, size, shape):
    return np.column_stack([(rng.random((n, 2)) - 0.5) * size * shape[:2], np.zeros(n)])


def _box(rng, n, size, shape):
    dims = size * shape
    areas = np.array([dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]]).repeat(2)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = (rng.random((n, 3)) - 0.5) * dims
    axis = face // 2
    sign = np.where(face % 2 == 0, -0.5, 0.5)
    pts[np.arange(n), axis] = sign * dims[axis]
    return pts


def _blob(rng, n, size, shape):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    bumps = shape[0] * np.sin(3 * d[:, 0] + shape[1]) + shape[2] * np.cos(2 * d[:, 1] - shape[1])
    r = 0.5 * size * (1.0 + 0.25 * bumps)
    return d * r[:, None]


_SURFACES = {"plane": _plane, "box": _box, "blob": _blob}


@dataclass
class _Object:
    kind: str
    shape: np.ndarray
    pose: np.ndarray
    center: np.ndarray

    def sample(self, rng, n, size) -> np.ndarray:
        local = _SURFACES[self.kind](rng, n, size, self.shape)
        return local @ self.pose.T + self.center


def _random_object(rng, spec: SyntheticSceneSpec) -> _Object:
    kind = spec.kinds[rng.integers(len(spec.kinds))]
    shape = rng.uniform(0.6, 1.4, size=3) if kind != "blob" else rng.uniform(-1, 1, size=3)
    pose = rotation_matrix(rng.uniform(-180, 180, size=3))
    lo, hi = spec.depth_range
    center = np.array([rng.uniform(-spec.extent, spec.extent), rng.uniform(-spec.extent, spec.extent), rng.uniform(lo, hi)])
    return _Object(kind, shape, pose, center)


def _random_motion(rng, spec: SyntheticSceneSpec, center: np.ndarray) -> RigidMotion:
    angles = np.zeros(3)
    for axis in spec.rotation_axes:
        angles["xyz".index(axis)] = rng.uniform(-spec.rotation_deg, spec.rotation_deg)
    t = rng.uniform(-spec.translation, spec.translation, size=3)
    return RigidMotion(rotation_matrix(angles), angles, center.copy(), t)


def generate_pair(spec: SyntheticSceneSpec, seed: int) -> Scene:
    rng = np.random.default_rng(seed)
    objects = [_random_object(rng, spec) for _ in range(spec.num_objects)]
    motions = [_random_motion(rng, spec, obj.center) for obj in objects]
    p_parts, q_parts, f_parts, labels = [], [], [], []
    for i, (obj, motion) in enumerate(zip(objects, motions)):
        pts = obj.sample(rng, spec.points_per_object, spec.object_size)
        disp = motion.displacement(pts)
        moved = pts + disp
        p_parts.append(pts)
        f_parts.append(disp)
        labels.append(np.full(len(pts), i))
        if spec.resample_independently:
            q_parts.append(motion.apply(obj.sample(rng, spec.points_per_object, spec.object_size)))
        else:
            q_parts.append(moved)
    p = np.concatenate(p_parts)
    q = np.concatenate(q_parts)
    flow = np.concatenate(f_parts)
    labels = np.concatenate(labels)

    occluded = np.zeros(len(p), dtype=bool)
    q_keep = np.ones(len(q), dtype=bool)
    n_occ = int(round(spec.occlusion_fraction * len(p)))
    if n_occ:
        moved = p + flow
        seed_pt = moved[rng.integers(len(p))]
        hidden = knn_euclidean(seed_pt[None], moved, n_occ).idx[0]
        occluded[hidden] = True
        if spec.resample_independently:
            radius = np.sqrt(((moved[hidden] - seed_pt) ** 2).sum(axis=1)).max()
            q_keep &= ((q - seed_pt) ** 2).sum(axis=1) > radius**2
        else:
            q_keep[hidden] = False

    if spec.depth_limit > 0:
        p_keep = p[:, 2] <= spec.depth_limit
        q_keep &= q[:, 2] <= spec.depth_limit
    else:
        p_keep = np.ones(len(p), dtype=bool)
    return Scene(
        p[p_keep],
        q[q_keep],
        flow[p_keep],
        occluded[p_keep],
        motions=motions,
        labels=labels[p_keep],
    )


def depth_filter(scene: Scene, limit: float) -> Scene:
    """Drop points whose depth (z) exceeds ``limit`` in either frame."""
    keep_p = scene.p[:, 2] <= limit
    keep_q = scene.q[:, 2] <= limit
    return Scene(
        scene.p[keep_p],
        scene.q[keep_q],
        None if scene.flow is None else scene.flow[keep_p],
        None if scene.occluded is None else scene.occluded[keep_p],
        motions=scene.motions,
        labels=None if scene.labels is None else scene.labels[keep_p],
    )
