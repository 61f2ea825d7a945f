from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synthetic import Scene, rotation_matrix


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float = 0.0  # max |angle| about each of x, y, z
    translation: float = 0.0  # max |offset| per axis, metres
    points: int = 0  # per-frame subsample size; 0 keeps every point in place


def augment(scene: Scene, params: AugmentParams, seed: int) -> Scene:
    """Apply one rigid perturbation to both frames and rotate the flow with it.

    When ``params.points`` is set each frame is independently subsampled
    (and thereby shuffled), so no point order survives between frames.
    """
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-params.rotation_deg, params.rotation_deg, size=3)
    offset = rng.uniform(-params.translation, params.translation, size=3)
    p = scene.p.astype(np.float64)
    q = scene.q.astype(np.float64)
    flow = None if scene.flow is None else scene.flow.astype(np.float64)
    occ = scene.occluded
    if params.rotation_deg or params.translation:
        rot = rotation_matrix(angles)
        p = p @ rot.T + offset
        q = q @ rot.T + offset
        if flow is not None:
            flow = flow @ rot.T
    labels = scene.labels
    if params.points:
        ip = _subsample(rng, len(p), params.points)
        iq = _subsample(rng, len(q), params.points)
        p, q = p[ip], q[iq]
        flow = None if flow is None else flow[ip]
        occ = None if occ is None else occ[ip]
        labels = None if labels is None else labels[ip]
    return Scene(p, q, flow, occ, motions=scene.motions, labels=labels)


def _subsample(rng, n: int, m: int) -> np.ndarray:
    if n >= m:
        return rng.choice(n, size=m, replace=False)
    # too few points: keep all of them, topping up with repeats
    return np.concatenate([rng.permutation(n), rng.choice(n, size=m - n, replace=True)])
