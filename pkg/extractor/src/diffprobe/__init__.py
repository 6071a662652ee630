"""Diffusion feature extraction for the label propagation engine.

Trains toy video/image denoisers on synthetic corpora, probes decoder
activations at chosen noise steps, and exports TEDF feature volumes
the engine consumes directly.
"""

from .errors import (BackboneUnavailableError, ConfigError, DataError,
                     FormatError, ProbeError, ShapeError)
from .features import (BACKBONES, BackboneSpec, extract_appearance_features,
                       extract_motion_features, load_backbone)
from .schedule import NoiseSchedule, add_noise
from .tedfio import FeatureMeta, load_features, save_features
from .train import (TrainConfig, load_checkpoint, train_toy_image_diffusion,
                    train_toy_video_diffusion)

__all__ = [
    "BACKBONES",
    "BackboneSpec",
    "BackboneUnavailableError",
    "ConfigError",
    "DataError",
    "FeatureMeta",
    "FormatError",
    "NoiseSchedule",
    "ProbeError",
    "ShapeError",
    "TrainConfig",
    "add_noise",
    "extract_appearance_features",
    "extract_motion_features",
    "load_backbone",
    "load_checkpoint",
    "load_features",
    "save_features",
    "train_toy_image_diffusion",
    "train_toy_video_diffusion",
]
