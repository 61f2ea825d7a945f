"""Multi-scale point-cloud scene flow estimation with a numpy autodiff core."""

from .config import ModelConfig, ScaleConfig, TrainConfig
from .encoder import Encoder, FeaturePyramid, extract_pyramid
from .geometry import PointCloud
from .predictor import MultiScaleOutput, SceneFlowNet, forward_pass, multiscale_loss

__all__ = [
    "Encoder",
    "FeaturePyramid",
    "ModelConfig",
    "MultiScaleOutput",
    "PointCloud",
    "ScaleConfig",
    "SceneFlowNet",
    "TrainConfig",
    "extract_pyramid",
    "forward_pass",
    "multiscale_loss",
]
