"""Controlled benchmark: identical bouncing balls on a dark background.

Every ball in a video shares one color and one radius, so appearance
carries no identity information and only motion can tell the balls
apart.  Ground-truth masks and two oracle feature volumes (motion and
appearance) are emitted next to the rendered frames, which gives the
propagation engine a noise-free upper bound for each cue.

All randomness flows through one numpy Generator seeded from the
config, and the draw order is fixed (radius, color, placement, speeds,
directions), so a (seed, geometry) pair regenerates a video bit for
bit.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, FormatError, PlacementError
from .tensorio import (FeatureMeta, FeatureVolume, MaskSequence,
                       save_features, save_frame_dir, save_labels)

GT_LABELS = "gt.tedl"
MOTION_FEATURES = "oracle_motion.tedf"
APPEARANCE_FEATURES = "oracle_appearance.tedf"
MANIFEST = "manifest.txt"

_PLACEMENT_ATTEMPTS = 1000
# Extra center separation beyond disk contact, in pixels.  Keeps the
# rasterized first-frame masks visually disjoint.
_PLACEMENT_MARGIN = 2.0


@dataclass
class SynthConfig:
    """Scene and rendering parameters for one synthetic video."""

    seed: int = 0
    frames: int = 16
    height: int = 64
    width: int = 64
    num_balls: int = 2
    radius_range: tuple = (6.0, 12.0)
    speed_range: tuple = (1.5, 4.0)
    min_velocity_angle_deg: float = 60.0
    feature_stride: int = 1
    ball_color: Optional[tuple] = None
    background_color: tuple = (12, 12, 12)

    def validate(self) -> "SynthConfig":
        if self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames}")
        if self.height < 8 or self.width < 8:
            raise ConfigError(f"frame size must be at least 8x8, got "
                              f"{self.height}x{self.width}")
        if not 1 <= self.num_balls <= 255:
            raise ConfigError(f"num_balls must be in 1..255, "
                              f"got {self.num_balls}")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ConfigError(f"bad radius_range {self.radius_range}")
        if hi >= min(self.height, self.width) / 4:
            raise ConfigError(f"max radius {hi} too large for "
                              f"{self.height}x{self.width} frames")
        lo, hi = self.speed_range
        # zero speed is allowed: a static scene is a valid degenerate case
        if not 0 <= lo <= hi:
            raise ConfigError(f"bad speed_range {self.speed_range}")
        if not 0 <= self.min_velocity_angle_deg <= 180:
            raise ConfigError(f"min_velocity_angle_deg must be in 0..180, "
                              f"got {self.min_velocity_angle_deg}")
        if self.num_balls * self.min_velocity_angle_deg > 360:
            raise ConfigError(f"{self.num_balls} directions cannot be "
                              f"pairwise {self.min_velocity_angle_deg} "
                              f"degrees apart")
        if self.feature_stride < 1:
            raise ConfigError(f"feature_stride must be >= 1, "
                              f"got {self.feature_stride}")
        return self


@dataclass
class ObjectTrack:
    """Per-frame state of one ball; centers/velocities are (T, 2) (x, y).

    velocities holds the ball's constant velocity signature at every
    frame; centers follow the reflected path.
    """

    object_id: int
    radius: float
    centers: np.ndarray
    velocities: np.ndarray


def _place_centers(rng: np.random.Generator, cfg: SynthConfig,
                   radius: float) -> np.ndarray:
    """Draw non-overlapping initial centers, or raise PlacementError."""
    lo_x, hi_x = radius, cfg.width - radius
    lo_y, hi_y = radius, cfg.height - radius
    min_dist = 2.0 * radius + _PLACEMENT_MARGIN
    for _ in range(_PLACEMENT_ATTEMPTS):
        xs = rng.uniform(lo_x, hi_x, cfg.num_balls)
        ys = rng.uniform(lo_y, hi_y, cfg.num_balls)
        centers = np.stack([xs, ys], axis=1)
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= min_dist:
            return centers
    raise PlacementError(f"could not place {cfg.num_balls} disks of radius "
                         f"{radius:.2f} in {cfg.height}x{cfg.width} after "
                         f"{_PLACEMENT_ATTEMPTS} attempts")


def _angular_separation(a: float, b: float) -> float:
    return abs((a - b + np.pi) % (2.0 * np.pi) - np.pi)


def _draw_directions(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Directions with pairwise separation >= the configured minimum."""
    min_sep = np.deg2rad(cfg.min_velocity_angle_deg)
    angles = [rng.uniform(0.0, 2.0 * np.pi)]
    for _ in range(1, cfg.num_balls):
        for _ in range(_PLACEMENT_ATTEMPTS):
            cand = rng.uniform(0.0, 2.0 * np.pi)
            if all(_angular_separation(cand, a) >= min_sep for a in angles):
                angles.append(cand)
                break
        else:
            raise PlacementError(f"could not draw {cfg.num_balls} directions "
                                 f"pairwise {cfg.min_velocity_angle_deg} "
                                 f"degrees apart after "
                                 f"{_PLACEMENT_ATTEMPTS} attempts")
    return np.array(angles)


def _reflect(pos: float, vel: float, lo: float, hi: float) -> tuple:
    """Mirror a coordinate back into [lo, hi], flipping velocity each hit."""
    while pos < lo or pos > hi:
        if pos < lo:
            pos = 2.0 * lo - pos
        else:
            pos = 2.0 * hi - pos
        vel = -vel
    return pos, vel


def simulate_tracks(cfg: SynthConfig) -> tuple:
    """Constant-velocity trajectories with elastic wall reflection.

    Draw order from the seeded generator: shared radius, ball color,
    initial centers, speeds, directions.  Centers always stay inside
    [radius, dim - radius] on both axes.

    Each ball's velocity is its constant motion parameter and is what
    the track records for every frame; it is the per-object identity
    signature the motion oracle exposes.  Wall reflection mirrors the
    position path (flipping the sign of the direction of travel), it
    does not change the object's identity.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    radius = rng.uniform(*cfg.radius_range)
    if cfg.ball_color is None:
        # Consumed here even though rendering applies it later, so the
        # draw order stays fixed for every config.
        color = tuple(int(v) for v in rng.integers(80, 256, 3))
    else:
        color = tuple(int(v) for v in cfg.ball_color)
    centers0 = _place_centers(rng, cfg, radius)
    speeds = rng.uniform(*cfg.speed_range, cfg.num_balls)
    angles = _draw_directions(rng, cfg)
    signature = np.stack([speeds * np.cos(angles),
                          speeds * np.sin(angles)], axis=1)

    k = cfg.num_balls
    centers = np.zeros((cfg.frames, k, 2))
    velocities = np.zeros((cfg.frames, k, 2))
    pos = centers0.copy()
    vel = signature.copy()
    for t in range(cfg.frames):
        centers[t] = pos
        velocities[t] = signature
        pos = pos + vel
        for b in range(k):
            pos[b, 0], vel[b, 0] = _reflect(pos[b, 0], vel[b, 0],
                                            radius, cfg.width - radius)
            pos[b, 1], vel[b, 1] = _reflect(pos[b, 1], vel[b, 1],
                                            radius, cfg.height - radius)

    tracks = [ObjectTrack(object_id=b + 1, radius=radius,
                          centers=centers[:, b], velocities=velocities[:, b])
              for b in range(k)]
    return tracks, color


def rasterize(cfg: SynthConfig, tracks: list, color: tuple) -> tuple:
    """Render frames and id masks; lower ids win overlapping pixels."""
    t_frames = cfg.frames
    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width]
    frames = np.empty((t_frames, cfg.height, cfg.width, 3), dtype=np.uint8)
    frames[:] = np.asarray(cfg.background_color, dtype=np.uint8)
    ids = np.zeros((t_frames, cfg.height, cfg.width), dtype=np.uint8)
    ball = np.asarray(color, dtype=np.uint8)
    for t in range(t_frames):
        for trk in tracks:
            cx, cy = trk.centers[t]
            inside = ((xx - cx) ** 2 + (yy - cy) ** 2) <= trk.radius ** 2
            ids[t][inside & (ids[t] == 0)] = trk.object_id
        frames[t][ids[t] > 0] = ball
    return frames, ids


def generate_video(cfg: SynthConfig) -> tuple:
    """Full sample: (frames (T,H,W,3) u8, MaskSequence, [ObjectTrack])."""
    tracks, color = simulate_tracks(cfg)
    frames, ids = rasterize(cfg, tracks, color)
    masks = MaskSequence(ids=ids, num_objects=cfg.num_balls).validate()
    return frames, masks, tracks


def _strided_grid(cfg: SynthConfig) -> tuple:
    s = cfg.feature_stride
    return np.arange(0, cfg.height, s), np.arange(0, cfg.width, s)


def oracle_motion_features(masks: MaskSequence, tracks: list,
                           cfg: SynthConfig,
                           video_id: str = "") -> FeatureVolume:
    """Ideal motion cue: unit (vx, vy, 1, 0) on each ball, (0, 0, 0, 1)
    on background.  Every pixel of one ball shares one vector, and the
    background is orthogonal to every ball vector.
    """
    rows, cols = _strided_grid(cfg)
    sub = masks.ids[:, rows[:, None], cols[None, :]]
    t_frames, h, w = sub.shape
    data = np.zeros((t_frames, 4, h, w))
    data[:, 3] = 1.0
    for trk in tracks:
        vecs = np.concatenate([trk.velocities,
                               np.ones((t_frames, 1)),
                               np.zeros((t_frames, 1))], axis=1)
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        sel = sub == trk.object_id
        for t in range(t_frames):
            data[t, :, sel[t]] = vecs[t]
    meta = FeatureMeta(video_id=video_id, feature_kind="oracle_motion")
    return FeatureVolume(data=data.astype(np.float32), meta=meta).validate()


def oracle_appearance_features(frames: np.ndarray, cfg: SynthConfig,
                               video_id: str = "") -> FeatureVolume:
    """Ideal appearance cue: unit (R, G, B, 255)/norm per pixel.  Balls
    in one video map to a single vector, so this cue separates ball
    from background but cannot separate ball from ball.
    """
    rows, cols = _strided_grid(cfg)
    sub = frames[:, rows[:, None], cols[None, :], :].astype(np.float64)
    vecs = np.concatenate([sub / 255.0,
                           np.ones(sub.shape[:3] + (1,))], axis=3)
    vecs /= np.linalg.norm(vecs, axis=3, keepdims=True)
    data = np.moveaxis(vecs, 3, 1)
    meta = FeatureMeta(video_id=video_id, feature_kind="oracle_appearance")
    return FeatureVolume(data=data.astype(np.float32), meta=meta).validate()


def derive_seed(base_seed: int, index: int) -> int:
    """Stable per-video seed from the corpus seed and video index."""
    state = np.random.SeedSequence([base_seed, index]).generate_state(
        1, np.uint64)
    return int(state[0])


def generate_benchmark(cfg: SynthConfig, num_videos: int,
                       out_dir: str) -> list:
    """Write a benchmark corpus and its manifest; returns video records.

    Layout per video:  <out_dir>/video_### holding frame_*.ppm, gt.tedl,
    oracle_motion.tedf, oracle_appearance.tedf.  The manifest lists
    "<video_id> <seed> <frames> <height> <width>" per line, enough to
    regenerate any video independently.
    """
    if num_videos < 0:
        raise ConfigError(f"num_videos must be >= 0, got {num_videos}")
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(num_videos):
        video_id = f"video_{i:03d}"
        seed = derive_seed(cfg.seed, i)
        vid_cfg = SynthConfig(**{**cfg.__dict__, "seed": seed})
        frames, masks, tracks = generate_video(vid_cfg)
        vid_dir = os.path.join(out_dir, video_id)
        save_frame_dir(frames, vid_dir)
        save_labels(os.path.join(vid_dir, GT_LABELS), masks)
        save_features(os.path.join(vid_dir, MOTION_FEATURES),
                      oracle_motion_features(masks, tracks, vid_cfg,
                                             video_id))
        save_features(os.path.join(vid_dir, APPEARANCE_FEATURES),
                      oracle_appearance_features(frames, vid_cfg, video_id))
        records.append((video_id, seed, vid_cfg.frames, vid_cfg.height,
                        vid_cfg.width))
    tmp = os.path.join(out_dir, MANIFEST + ".tmp")
    with open(tmp, "w") as fh:
        for rec in records:
            fh.write(" ".join(str(v) for v in rec) + "\n")
    os.replace(tmp, os.path.join(out_dir, MANIFEST))
    return records


def read_manifest(path: str) -> list:
    """Parse manifest lines into (video_id, seed, frames, height, width)."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 fields, "
                                  f"got {len(parts)}")
            try:
                records.append((parts[0], int(parts[1]), int(parts[2]),
                                int(parts[3]), int(parts[4])))
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
    return records
