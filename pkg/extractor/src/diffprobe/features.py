"""Feature probes over denoiser activations.

A probe diffuses clean frames to a chosen noise step, runs one forward
pass of a denoising backbone, captures one decoder block, resizes the
activations bilinearly to a declared grid, and exports the result as a
TEDF feature volume.  No sampling loop runs and input frames are never
modified.

Motion features come from the video route (the whole clip in one pass,
temporal layers intact), appearance features from the image route
(each frame independent).  Pretrained backbones are described here so
their configurations validate, but their weights are not bundled;
loading one raises BackboneUnavailableError.
"""

from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import frames_to_tensor
from .errors import BackboneUnavailableError, ConfigError, ShapeError
from .schedule import NoiseSchedule, add_noise
from .tedfio import FeatureMeta
from .train import load_checkpoint

DEFAULT_MOTION_TAU = 900
DEFAULT_APPEARANCE_TAU = 51
DEFAULT_GRID = 32
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class _BackboneInfo:
    route: str            # "video" or "image"
    max_frames: int       # 0 means per-frame, no clip limit
    num_blocks: int       # decoder blocks, numbered from the decoder input
    default_block: int
    bundled: bool         # weights trainable/loadable in this repo


BACKBONES = {
    "toy3d": _BackboneInfo("video", 16, 3, 3, True),
    "toy2d": _BackboneInfo("image", 0, 3, 3, True),
    "i2vgen_xl": _BackboneInfo("video", 16, 4, 3, False),
    "svd": _BackboneInfo("video", 25, 4, 3, False),
    "adm": _BackboneInfo("image", 0, 18, 8, False),
    "sd": _BackboneInfo("image", 0, 12, 8, False),
}


@dataclass(frozen=True)
class BackboneSpec:
    """Which denoiser to probe and where.

    block indexes decoder blocks from the decoder input; None picks the
    backbone's documented default (3 for video backbones, 8 for the
    pretrained image backbones, 3 for the toy ones).  weights locates a
    toy checkpoint; pretrained kinds ignore it and fail to load here.
    """

    kind: str
    weights: str = ""
    block: int = None

    def validate(self) -> "BackboneSpec":
        if self.kind not in BACKBONES:
            raise ConfigError(
                f"unknown backbone kind {self.kind!r}; "
                f"expected one of {sorted(BACKBONES)}")
        info = BACKBONES[self.kind]
        block = self.block if self.block is not None else info.default_block
        if not 1 <= block <= info.num_blocks:
            raise ConfigError(
                f"block {block} invalid for {self.kind}: decoder has "
                f"{info.num_blocks} blocks")
        return replace(self, block=block)

    @property
    def info(self) -> _BackboneInfo:
        return BACKBONES[self.kind]


def load_backbone(spec: BackboneSpec):
    """Materialize the denoiser behind a spec: (model, schedule, config).

    Only the toy kinds can load from a local checkpoint; the pretrained
    kinds need GPU-scale weights that are not part of this repo.
    """
    spec = spec.validate()
    if not spec.info.bundled:
        raise BackboneUnavailableError(
            f"backbone {spec.kind!r} requires pretrained weights that are "
            f"not bundled; install them and run on a GPU host, or use a "
            f"toy backbone")
    if not spec.weights:
        raise ConfigError(f"backbone {spec.kind!r} needs a weights path")
    model, schedule, cfg, kind = load_checkpoint(spec.weights)
    if kind != spec.kind:
        raise ConfigError(f"weights file holds a {kind!r} model, "
                          f"spec says {spec.kind!r}")
    return model, schedule, cfg


def _check_frames(frames: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise ShapeError(f"frames must be (T, H, W, 3), "
                         f"got {frames.shape}")
    if frames.dtype != np.uint8:
        raise ShapeError(f"frames must be uint8, got {frames.dtype}")
    return frames


def _sample_seed(seed: int, sample: int) -> int:
    # stable per-sample noise seeds, independent across sample indices
    return int(np.random.SeedSequence([seed, sample])
               .generate_state(1, np.uint64)[0] >> 1)


def _probe(model, schedule: NoiseSchedule, frames: np.ndarray,
           resolution: int, tau: int, block: int, n_samples: int,
           seed: int, grid: int, frame_noise: bool) -> np.ndarray:
    """Average block activations over noise draws; (T, C, grid, grid).

    frame_noise replaces the clip-shaped draw with one (3, R, R) field
    broadcast to every frame: a frame's noisy version then depends only
    on that frame's pixels, which keeps the per-frame image route an
    exact function of frame content (and so permutation-equivariant).
    """
    x0 = frames_to_tensor(frames, resolution)[None]
    taus = torch.full((1,), tau, dtype=torch.long)
    total = None
    with torch.no_grad():
        for s in range(n_samples):
            draw = _sample_seed(seed, s)
            if frame_noise:
                gen = torch.Generator().manual_seed(draw)
                eps = torch.randn((1, 3, 1, x0.shape[3], x0.shape[4]),
                                  generator=gen)
                noisy = (schedule.signal_scale(tau) * x0
                         + schedule.noise_scale(tau) * eps)
            else:
                noisy, _ = add_noise(x0, tau, schedule, draw)
            _, feats = model(noisy, taus, return_features=True)
            act = feats[block][0]
            total = act if total is None else total + act
    act = (total / n_samples).permute(1, 0, 2, 3)
    if act.shape[2] != grid or act.shape[3] != grid:
        act = F.interpolate(act, size=(grid, grid), mode="bilinear",
                            align_corners=False)
    return act.numpy().astype(np.float32)


def _unit_channels(data: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(data.astype(np.float64) ** 2, axis=1,
                           keepdims=True))
    out = np.where(norms < _NORM_EPS, 0.0, data / np.maximum(norms,
                                                             _NORM_EPS))
    return out.astype(np.float32)


def _center_channels(data: np.ndarray) -> np.ndarray:
    # raw activations share a large DC component that crowds out the
    # discriminative directions once vectors are unit-normalized;
    # removing the volume-wide mean restores the contrast
    mu = data.astype(np.float64).mean(axis=(0, 2, 3), keepdims=True)
    return (data - mu).astype(np.float32)


def extract_motion_features(frames: np.ndarray, spec: BackboneSpec,
                            tau: int = None, n_samples: int = 1,
                            seed: int = 0, grid: int = DEFAULT_GRID,
                            normalize: bool = True, center: bool = True,
                            video_id: str = "") -> tuple:
    """Joint-clip probe of a video backbone; returns (data, meta).

    The whole clip passes through the denoiser in one forward call so
    temporal layers see every frame; averaging over n_samples
    independent noise draws smooths out the injected noise.  data is
    (T, C, grid, grid) float32.
    """
    frames = _check_frames(frames)
    spec = spec.validate()
    if spec.info.route != "video":
        raise ConfigError(f"backbone {spec.kind!r} is an image backbone; "
                          f"motion features need a video backbone")
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    if grid < 1:
        raise ConfigError(f"grid must be positive, got {grid}")
    if frames.shape[0] > spec.info.max_frames:
        raise ConfigError(
            f"clip of {frames.shape[0]} frames exceeds {spec.kind} limit "
            f"{spec.info.max_frames}; split it into windows first")
    model, schedule, cfg = load_backbone(spec)
    if tau is None:
        tau = DEFAULT_MOTION_TAU
    tau = schedule.validate_step(tau)
    data = _probe(model, schedule, frames, cfg.resolution, tau, spec.block,
                  n_samples, seed, grid, frame_noise=False)
    if center:
        data = _center_channels(data)
    if normalize:
        data = _unit_channels(data)
    meta = FeatureMeta(video_id=video_id, noise_step=tau,
                       block_index=spec.block,
                       feature_kind="video_diffusion",
                       extra={"backbone": spec.kind,
                              "noise_samples": n_samples,
                              "noise_seed": seed})
    return data, meta


def extract_appearance_features(frames: np.ndarray, spec: BackboneSpec,
                                tau: int = None, seed: int = 0,
                                grid: int = DEFAULT_GRID,
                                normalize: bool = True, center: bool = True,
                                video_id: str = "") -> tuple:
    """Per-frame probe of an image backbone; returns (data, meta).

    Frames pass through the denoiser independently and share one noise
    field, so the output for a frame is a function of that frame's
    pixels alone: reordering input frames reorders outputs identically.
    """
    frames = _check_frames(frames)
    spec = spec.validate()
    if spec.info.route != "image":
        raise ConfigError(f"backbone {spec.kind!r} is a video backbone; "
                          f"appearance features need an image backbone")
    if grid < 1:
        raise ConfigError(f"grid must be positive, got {grid}")
    model, schedule, cfg = load_backbone(spec)
    if tau is None:
        tau = DEFAULT_APPEARANCE_TAU
    tau = schedule.validate_step(tau)
    data = _probe(model, schedule, frames, cfg.resolution, tau, spec.block,
                  1, seed, grid, frame_noise=True)
    if center:
        data = _center_channels(data)
    if normalize:
        data = _unit_channels(data)
    meta = FeatureMeta(video_id=video_id, noise_step=tau,
                       block_index=spec.block,
                       feature_kind="image_diffusion",
                       extra={"backbone": spec.kind, "noise_seed": seed})
    return data, meta
