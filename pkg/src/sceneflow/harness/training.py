"""Supervised training loop with the stepped exponential learning-rate schedule."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from ..autodiff import Adam, NonFiniteError, TrainingDivergedError, backward
from ..config import TrainConfig, load_config, to_kv
from ..encoder import scale_seed
from ..predictor import SceneFlowNet, ground_truth_pyramid, multiscale_loss
from .augment import AugmentParams, augment
from .scene_io import list_scenes, read_scene
from .synthetic import Scene, SyntheticSceneSpec, generate_pair

logger = logging.getLogger(__name__)

MODEL_CONFIG = "model.cfg"
TRAIN_LOG = "train_log.csv"


def lr_schedule(epoch: int, lr0: float = 1e-3, rate: float = 0.8, interval: int = 60) -> float:
    return lr0 * rate ** (epoch // interval)


def load_dataset(source) -> list[Scene]:
    """Scenes from a list, a directory of ``.sfpc`` files, or a synthetic spec file."""
    if isinstance(source, (list, tuple)):
        return list(source)
    path = Path(source)
    if path.is_dir():
        files = list_scenes(path)
        if not files:
            raise FileNotFoundError(f"no .sfpc scenes in {path}")
        return [read_scene(f) for f in files]
    raise FileNotFoundError(f"cannot load scenes from {source}")


def synthetic_dataset(spec: SyntheticSceneSpec, count: int, seed: int) -> list[Scene]:
    return [generate_pair(spec, scale_seed(seed, i)) for i in range(count)]


def save_model(model: SceneFlowNet, out: str | Path) -> Path:
    out = Path(out)
    model.store.save(out)
    (out / MODEL_CONFIG).write_text(to_kv(model.cfg), encoding="utf-8")
    return out


def _resolve_data(cfg: TrainConfig, data) -> list[Scene]:
    if data is not None:
        return load_dataset(data)
    if cfg.data_dir:
        return load_dataset(cfg.data_dir)
    if cfg.synthetic_spec:
        spec = load_config(SyntheticSceneSpec, cfg.synthetic_spec)
        return synthetic_dataset(spec, cfg.num_scenes, cfg.seed)
    raise ValueError("no training data: pass scenes or set data_dir / synthetic_spec")


def train(cfg: TrainConfig, data=None, out: str | Path = "checkpoint", model: SceneFlowNet | None = None) -> Path:
    """Train on ``data`` and write a checkpoint directory (weights, config, CSV log)."""
    scenes = _resolve_data(cfg, data)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    model = model or SceneFlowNet(cfg.model, seed=cfg.seed)
    opt = Adam(model.store, lr=cfg.lr0)
    aug = AugmentParams(
        cfg.augment_rotation_deg if cfg.augment else 0.0,
        cfg.augment_translation if cfg.augment else 0.0,
        cfg.train_points,
    )
    rng = np.random.default_rng(cfg.seed)
    it = 0
    with open(out / TRAIN_LOG, "w", newline="") as fh:
        log = csv.writer(fh)
        log.writerow(["iter", "loss", "lr", "ms"])
        for epoch in range(cfg.epochs):
            lr = cfg.lr_at(epoch)
            for scene_id in rng.permutation(len(scenes)):
                if cfg.max_iters and it >= cfg.max_iters:
                    break
                t0 = time.perf_counter()
                loss = train_step(model, opt, scenes[scene_id], aug, scale_seed(cfg.seed, it + 1), lr, it)
                ms = 1000.0 * (time.perf_counter() - t0)
                log.writerow([it, repr(loss), repr(lr), f"{ms:.1f}"])
                it += 1
            fh.flush()
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_model(model, out)
            if cfg.max_iters and it >= cfg.max_iters:
                break
    save_model(model, out)
    logger.info("trained %d iterations, checkpoint at %s", it, out)
    return out


def train_step(model: SceneFlowNet, opt: Adam, scene: Scene, aug: AugmentParams, seed: int, lr: float, it: int = 0) -> float:
    pair = augment(scene, aug, seed) if (aug.rotation_deg or aug.translation or aug.points) else scene
    model.store.zero_grad()
    try:
        out = model(pair.cloud_p, pair.cloud_q, seed)
        loss = multiscale_loss(out.flows, ground_truth_pyramid(pair.flow, out.pyramid_p))
    except NonFiniteError as exc:
        raise TrainingDivergedError(f"iteration {it}: non-finite activations ({exc})") from exc
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDivergedError(f"iteration {it}: loss is {value}")
    backward(loss, model.store)
    opt.step(lr)
    return value


def read_log(path: str | Path) -> list[dict]:
    with open(Path(path)) as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def losses(path: str | Path) -> Sequence[float]:
    return [float(r["loss"]) for r in read_log(Path(path) / TRAIN_LOG if Path(path).is_dir() else path)]
