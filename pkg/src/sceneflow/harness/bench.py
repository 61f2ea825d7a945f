"""Density sweep: accuracy, runtime and peak memory per (N, sampler)."""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from pathlib import Path
from typing import Iterable

import numpy as np

from ..config import DEFAULT_RESOLUTIONS, ResolutionError, default_k
from ..encoder import scale_seed
from ..geometry import sample
from ..predictor import SceneFlowNet
from .augment import AugmentParams, augment
from .evaluation import inference_scales, load_model, measured_predict
from .metrics import acc3dr, epe3d
from .synthetic import Scene, SyntheticSceneSpec, generate_pair

MIN_POINTS = 8192
BENCH_HEADER = ["density", "sampler", "epe3d", "acc3dr", "ms", "bytes", "status"]


def adaptive_scale_resolutions(n: int, sampler: str = "rs") -> tuple[int, int, int]:
    """Downsampling resolutions for an input of ``n`` points.

    Above 32768 points the schedule doubles; above 131072 points random
    sampling quadruples it (FPS stays at the doubled schedule).
    """
    if n < MIN_POINTS:
        raise ResolutionError(f"{n} points is below the {MIN_POINTS}-point minimum")
    if n > 131072 and sampler == "rs":
        return (8192, 2048, 512)
    if n > 32768:
        return (4096, 1024, 256)
    return DEFAULT_RESOLUTIONS


def density_scene(n: int, seed: int, spec: SyntheticSceneSpec | None = None) -> Scene:
    """A synthetic pair with exactly ``n`` points per frame."""
    spec = spec or SyntheticSceneSpec(resample_independently=True)
    per_object = math.ceil(1.05 * n / spec.num_objects)
    spec = dataclasses.replace(spec, points_per_object=per_object)
    scene = generate_pair(spec, seed)
    return augment(scene, AugmentParams(points=n), scale_seed(seed, n))


def sampling_step_seconds(n: int, sampler: str, seed: int = 0, repeats: int = 1) -> float:
    """Best-of-``repeats`` time to run the three sampling stages on ``n`` points."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-10, 10, size=(n, 3))
    res = adaptive_scale_resolutions(n, sampler)
    best = math.inf
    for r in range(repeats):
        t0 = time.perf_counter()
        cur = pts
        for level, m in enumerate(res, start=1):
            cur = cur[sample(cur, m, sampler, scale_seed(seed + r, level)).indices]
        best = min(best, time.perf_counter() - t0)
    return best


def fit_exponent(ns: Iterable[float], seconds: Iterable[float]) -> float:
    """Slope of log(time) against log(N)."""
    slope, _ = np.polyfit(np.log(np.asarray(list(ns), float)), np.log(np.asarray(list(seconds), float)), 1)
    return float(slope)


def benchmark_density(
    checkpoint,
    densities: list[int],
    samplers: list[str],
    csv_path: str | Path | None = None,
    seed: int = 0,
    spec: SyntheticSceneSpec | None = None,
) -> list[dict]:
    if list(densities) != sorted(densities):
        raise ValueError("densities must be ascending")
    model = checkpoint if isinstance(checkpoint, SceneFlowNet) else load_model(checkpoint)
    rows = []
    for n in densities:
        scene = None
        for sampler in samplers:
            row = {"density": n, "sampler": sampler, "epe3d": "", "acc3dr": "", "ms": "", "bytes": "", "status": "ok"}
            try:
                scene = scene or density_scene(n, seed, spec)
                scales = inference_scales(model, sampler, default_k(sampler), adaptive_scale_resolutions(n, sampler))
                flow, ms, peak = measured_predict(model, scene, scales, seed)
                row.update(
                    epe3d=f"{epe3d(flow, scene.flow):.6f}",
                    acc3dr=f"{acc3dr(flow, scene.flow):.3f}",
                    ms=f"{ms:.1f}",
                    bytes=str(peak),
                )
            except MemoryError:
                row["status"] = "oom"
            except ResolutionError as exc:
                row["status"] = f"skipped: {exc}"
            rows.append(row)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=BENCH_HEADER)
            writer.writeheader()
            writer.writerows(rows)
    return rows
