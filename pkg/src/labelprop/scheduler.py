"""Sliding-window clip planning for videos longer than the feature
extractor's native length.

A video of N frames is cut into clips of window length L advanced by
stride L - l, so consecutive clips share l frames:

    clip count = floor((N - L) / (L - l)) + 1

If those clips stop short of frame N, one extra end-aligned clip
(N - L + 1, N) is appended so every frame is covered; it may overlap
its predecessor by more than l.  Clip bounds are 1-based inclusive.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensorio import FeatureMeta, FeatureVolume


@dataclass
class ClipPlan:
    n_frames: int
    window: int
    overlap: int
    clips: list = field(default_factory=list)

    def clip_lengths(self) -> list:
        return [b - a + 1 for a, b in self.clips]

    def validate(self) -> "ClipPlan":
        if not self.clips:
            raise ConfigError("plan has no clips")
        covered = np.zeros(self.n_frames, dtype=bool)
        for a, b in self.clips:
            if not 1 <= a <= b <= self.n_frames:
                raise ConfigError(f"clip ({a}, {b}) outside "
                                  f"1..{self.n_frames}")
            covered[a - 1:b] = True
        if not covered.all():
            missing = int(np.argmin(covered)) + 1
            raise ConfigError(f"frame {missing} not covered by any clip")
        return self


def plan_clips(n_frames: int, window: int, overlap: int) -> ClipPlan:
    """Clip schedule covering frames 1..n_frames.

    A video no longer than the window becomes a single clip; all other
    clips have exactly `window` frames.
    """
    if n_frames < 1:
        raise ConfigError(f"n_frames must be >= 1, got {n_frames}")
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if not 0 <= overlap < window:
        raise ConfigError(f"overlap must satisfy 0 <= overlap < window, "
                          f"got overlap={overlap} window={window}")
    if n_frames <= window:
        clips = [(1, n_frames)]
    else:
        stride = window - overlap
        count = (n_frames - window) // stride + 1
        clips = [(1 + k * stride, window + k * stride)
                 for k in range(count)]
        if clips[-1][1] < n_frames:
            clips.append((n_frames - window + 1, n_frames))
    return ClipPlan(n_frames=n_frames, window=window, overlap=overlap,
                    clips=clips).validate()


def slice_clips(vol: FeatureVolume, plan: ClipPlan) -> list:
    """Cut a full-video volume into per-clip volumes.

    Each clip's metadata records its 0-based start frame, which is how
    downstream stitching knows where the clip belongs.
    """
    vol.validate()
    if vol.num_frames != plan.n_frames:
        raise ShapeError(f"volume has {vol.num_frames} frames, plan covers "
                         f"{plan.n_frames}")
    out = []
    for a, b in plan.clips:
        src = vol.meta or FeatureMeta()
        meta = FeatureMeta(video_id=src.video_id, clip_start_frame=a - 1,
                           noise_step=src.noise_step,
                           block_index=src.block_index,
                           feature_kind=src.feature_kind,
                           extra=dict(src.extra))
        out.append(FeatureVolume(data=vol.data[a - 1:b].copy(), meta=meta))
    return out


def stitch_features(plan: ClipPlan, clip_volumes: list,
                    refresh: bool = False) -> FeatureVolume:
    """Merge per-clip volumes back into one full-video volume.

    Overlapped frames keep the earliest clip's features; refresh=True
    lets later clips overwrite instead, trading temporal consistency
    near clip starts for fresher context.
    """
    plan.validate()
    if len(clip_volumes) != len(plan.clips):
        raise ConfigError(f"plan has {len(plan.clips)} clips but "
                          f"{len(clip_volumes)} volumes were given")
    ref_shape = clip_volumes[0].data.shape[1:]
    for (a, b), vol in zip(plan.clips, clip_volumes):
        vol.validate()
        if vol.num_frames != b - a + 1:
            raise ShapeError(f"clip ({a}, {b}) needs {b - a + 1} frames, "
                             f"volume has {vol.num_frames}")
        if vol.data.shape[1:] != ref_shape:
            raise ShapeError(f"clip volumes disagree on (C, h, w): "
                             f"{vol.data.shape[1:]} vs {ref_shape}")
    out = np.zeros((plan.n_frames,) + ref_shape, dtype=np.float32)
    written = np.zeros(plan.n_frames, dtype=bool)
    for (a, b), vol in zip(plan.clips, clip_volumes):
        for offset, frame in enumerate(range(a - 1, b)):
            if refresh or not written[frame]:
                out[frame] = vol.data[offset]
                written[frame] = True
    src = clip_volumes[0].meta or FeatureMeta()
    meta = FeatureMeta(video_id=src.video_id, clip_start_frame=0,
                       noise_step=src.noise_step,
                       block_index=src.block_index,
                       feature_kind=src.feature_kind,
                       extra=dict(src.extra))
    return FeatureVolume(data=out, meta=meta)
