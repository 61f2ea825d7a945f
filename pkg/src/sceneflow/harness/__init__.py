from .augment import AugmentParams, augment
from .bench import adaptive_scale_resolutions, benchmark_density, fit_exponent, sampling_step_seconds
from .evaluation import evaluate, load_model, predict
from .metrics import MetricsReport, acc3d, acc3dr, acc3ds, epe3d
from .scene_io import FormatError, read_scene, write_scene
from .synthetic import Scene, SyntheticSceneSpec, generate_pair
from .training import lr_schedule, save_model, synthetic_dataset, train

__all__ = [
    "AugmentParams",
    "FormatError",
    "MetricsReport",
    "Scene",
    "SyntheticSceneSpec",
    "acc3d",
    "acc3dr",
    "acc3ds",
    "adaptive_scale_resolutions",
    "augment",
    "benchmark_density",
    "epe3d",
    "evaluate",
    "fit_exponent",
    "generate_pair",
    "load_model",
    "lr_schedule",
    "predict",
    "read_scene",
    "sampling_step_seconds",
    "save_model",
    "synthetic_dataset",
    "train",
    "write_scene",
]
