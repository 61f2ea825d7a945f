from __future__ import annotations

import time
import tracemalloc
from pathlib import Path

import numpy as np

from ..autodiff import CheckpointError, load_checkpoint, no_grad
from ..config import ConfigError, ModelConfig, ScaleConfig, default_k, from_kv, parse_kv
from ..predictor import SceneFlowNet
from .metrics import MetricsReport, mean_report, scene_metrics
from .synthetic import Scene
from .training import MODEL_CONFIG, load_dataset


def load_model(checkpoint: str | Path) -> SceneFlowNet:
    checkpoint = Path(checkpoint)
    try:
        values = parse_kv((checkpoint / MODEL_CONFIG).read_text(encoding="utf-8"))
        cfg, _ = from_kv(ModelConfig, values)
    except (OSError, ConfigError) as exc:
        raise CheckpointError(f"cannot read model config in {checkpoint}: {exc}") from None
    model = SceneFlowNet(cfg)
    model.store.load_state(load_checkpoint(checkpoint))
    return model


def inference_scales(model: SceneFlowNet, sampler: str | None = None, k: int | None = None, resolutions=None) -> ScaleConfig:
    """The model's scale config with sampler, K_p and resolutions overridden for inference."""
    base = model.cfg.scales
    sampler = sampler or base.sampler
    if k is None:
        k = base.k_neighbors if sampler == base.sampler else default_k(sampler)
    return base.replace(sampler=sampler, k_neighbors=k, resolutions=tuple(resolutions or base.resolutions))


def predict(model: SceneFlowNet, scene: Scene, scales: ScaleConfig | None = None, seed: int = 0) -> np.ndarray:
    with no_grad():
        return model(scene.cloud_p, scene.cloud_q, seed, scales).full_flow.astype(np.float32)


def measured_predict(model: SceneFlowNet, scene: Scene, scales: ScaleConfig | None = None, seed: int = 0):
    """Prediction plus wall-clock milliseconds and peak traced allocation in bytes."""
    tracemalloc.start()
    tracemalloc.reset_peak()
    try:
        t0 = time.perf_counter()
        flow = predict(model, scene, scales, seed)
        ms = 1000.0 * (time.perf_counter() - t0)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return flow, ms, peak


def evaluate(
    checkpoint,
    dataset,
    sampler: str | None = None,
    k: int | None = None,
    oracle: bool = False,
    seed: int = 0,
) -> MetricsReport:
    """Metrics over every point and over the non-occluded subset, averaged per scene.

    ``checkpoint`` is a directory or an already loaded model. With ``oracle``
    the ground truth stands in for the prediction (a harness self-check).
    """
    scenes = load_dataset(dataset)
    model = None if oracle else (checkpoint if isinstance(checkpoint, SceneFlowNet) else load_model(checkpoint))
    scales = None if oracle else inference_scales(model, sampler, k)
    reports = []
    for i, scene in enumerate(scenes):
        if scene.flow is None:
            raise ValueError(f"scene {i} has no ground-truth flow")
        if oracle:
            pred, ms, peak = scene.flow, 0.0, 0
        else:
            pred, ms, peak = measured_predict(model, scene, scales, seed)
        r = scene_metrics(pred, scene.flow, scene.occluded)
        r.runtime_ms, r.peak_bytes = ms, peak
        reports.append(r)
    return mean_report(reports)
