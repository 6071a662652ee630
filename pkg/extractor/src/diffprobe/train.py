"""Noise-prediction training for the toy denoisers.

Each step draws a batch of random temporal crops, a uniform noise step
per clip, and fresh Gaussian noise; the model regresses the noise from
the diffused clip (plain MSE).  Runs are deterministic for a fixed
seed on CPU.
"""

import sys
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .dataset import VideoDataset
from .errors import ConfigError, FormatError
from .models import build_model
from .schedule import (DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
                       NoiseSchedule)

CHECKPOINT_VERSION = 1
BLOCK_NUMBERING = "decoder blocks numbered 1..3 from the decoder input"


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    seed: int = 0
    batch_size: int = 2
    clip_frames: int = 8
    base_channels: int = 16
    time_dim: int = 64
    resolution: int = 32
    lr: float = 1.0e-3
    schedule_steps: int = DEFAULT_STEPS
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END

    def validate(self) -> "TrainConfig":
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, "
                              f"got {self.batch_size}")
        if self.clip_frames < 2:
            raise ConfigError(f"clip_frames must be >= 2, "
                              f"got {self.clip_frames}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        return self


def _train(kind: str, data_dir: str, out_path: str, cfg: TrainConfig,
           verbose: bool = False) -> list:
    cfg.validate()
    data = VideoDataset(data_dir, cfg.resolution)
    schedule = NoiseSchedule.linear(cfg.schedule_steps, cfg.beta_start,
                                    cfg.beta_end)
    torch.manual_seed(cfg.seed)
    model = build_model(kind, cfg.base_channels, cfg.time_dim)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    scale_s = torch.from_numpy(np.sqrt(schedule.alpha_bar)).float()
    scale_n = torch.from_numpy(np.sqrt(1.0 - schedule.alpha_bar)).float()

    losses = []
    model.train()
    for step in range(cfg.steps):
        clips = data.sample_batch(cfg.batch_size, cfg.clip_frames, gen)
        tau = torch.randint(1, schedule.num_steps + 1, (cfg.batch_size,),
                            generator=gen)
        eps = torch.randn(clips.shape, generator=gen)
        shape = (-1, 1, 1, 1, 1)
        noisy = (scale_s[tau].view(shape) * clips
                 + scale_n[tau].view(shape) * eps)
        pred = model(noisy, tau)
        loss = torch.mean((pred - eps) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
        if verbose and (step % 100 == 0 or step == cfg.steps - 1):
            lo = max(0, len(losses) - 50)
            window = sum(losses[lo:]) / (len(losses) - lo)
            print(f"step {step:6d}  loss {losses[-1]:.4f}  "
                  f"window {window:.4f}", file=sys.stderr, flush=True)

    model.eval()
    torch.save({
        "checkpoint_version": CHECKPOINT_VERSION,
        "kind": kind,
        "block_numbering": BLOCK_NUMBERING,
        "config": asdict(cfg),
        "state_dict": model.state_dict(),
        "losses": losses,
    }, out_path)
    return losses


def train_toy_video_diffusion(data_dir: str, out_path: str,
                              cfg: TrainConfig = TrainConfig(),
                              verbose: bool = False) -> list:
    """Train the clip denoiser; returns the per-step loss history."""
    return _train("toy3d", data_dir, out_path, cfg, verbose)


def train_toy_image_diffusion(data_dir: str, out_path: str,
                              cfg: TrainConfig = TrainConfig(),
                              verbose: bool = False) -> list:
    """Train the per-frame variant; returns the per-step loss history."""
    return _train("toy2d", data_dir, out_path, cfg, verbose)


def load_checkpoint(path: str):
    """Rebuild a trained toy model: (model, schedule, config dict, kind)."""
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise FormatError(f"unreadable checkpoint {path}: {e}") from e
    for key in ("checkpoint_version", "kind", "config", "state_dict"):
        if key not in blob:
            raise FormatError(f"checkpoint missing field {key!r}")
    if blob["checkpoint_version"] != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version "
                          f"{blob['checkpoint_version']}")
    cfg = TrainConfig(**blob["config"])
    model = build_model(blob["kind"], cfg.base_channels, cfg.time_dim)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    schedule = NoiseSchedule.linear(cfg.schedule_steps, cfg.beta_start,
                                    cfg.beta_end)
    return model, schedule, cfg, blob["kind"]
