"""Training data access for the toy denoisers.

Reads a benchmark corpus laid out by the engine's generator: a
manifest.txt listing video ids plus per-video directories of numbered
PPM frames.  Pixels are mapped to [-1, 1] floats and optionally
area-downsampled so the denoiser can train at a coarser resolution
than the rendered videos.
"""

import os

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, ShapeError
from .tedfio import load_frame_dir, read_manifest

MANIFEST = "manifest.txt"


def frames_to_tensor(frames: np.ndarray, resolution: int) -> torch.Tensor:
    """(T, H, W, 3) uint8 -> (3, T, R, R) float32 in [-1, 1]."""
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise ShapeError(f"frames must be (T, H, W, 3), got {frames.shape}")
    x = torch.from_numpy(np.ascontiguousarray(frames)).float()
    x = x.permute(3, 0, 1, 2) / 127.5 - 1.0
    if frames.shape[1] != resolution or frames.shape[2] != resolution:
        x = F.interpolate(x, size=(resolution, resolution), mode="area")
    return x


class VideoDataset:
    """All videos of one corpus held in memory as a single tensor."""

    def __init__(self, data_dir: str, resolution: int = 32):
        if resolution < 4 or resolution % 4:
            raise ConfigError(
                f"resolution must be a positive multiple of 4, "
                f"got {resolution}")
        video_dirs = self._video_dirs(data_dir)
        if not video_dirs:
            raise ConfigError(f"no videos found under {data_dir}")
        clips = []
        for vid_dir in video_dirs:
            clips.append(frames_to_tensor(load_frame_dir(vid_dir),
                                          resolution))
        if len({c.shape for c in clips}) != 1:
            raise ShapeError("all videos in a dataset must share one "
                             "frame count and size")
        self.clips = torch.stack(clips)
        self.resolution = resolution

    @staticmethod
    def _video_dirs(data_dir: str) -> list:
        if not os.path.isdir(data_dir):
            raise FileNotFoundError(f"dataset directory not found: "
                                    f"{data_dir}")
        manifest = os.path.join(data_dir, MANIFEST)
        if os.path.exists(manifest):
            return [os.path.join(data_dir, video_id)
                    for video_id, _ in read_manifest(manifest)]
        return sorted(
            os.path.join(data_dir, name) for name in os.listdir(data_dir)
            if os.path.exists(os.path.join(data_dir, name,
                                           "frame_00000.ppm")))

    @property
    def num_videos(self) -> int:
        return int(self.clips.shape[0])

    @property
    def num_frames(self) -> int:
        return int(self.clips.shape[2])

    def sample_batch(self, batch_size: int, clip_frames: int,
                     gen: torch.Generator) -> torch.Tensor:
        """Random temporal crops, (batch, 3, clip_frames, R, R)."""
        if clip_frames > self.num_frames:
            raise ConfigError(
                f"clip_frames {clip_frames} exceeds video length "
                f"{self.num_frames}")
        idx = torch.randint(self.num_videos, (batch_size,), generator=gen)
        lo = torch.randint(self.num_frames - clip_frames + 1,
                           (batch_size,), generator=gen)
        return torch.stack([
            self.clips[i, :, s:s + clip_frames]
            for i, s in zip(idx.tolist(), lo.tolist())])
