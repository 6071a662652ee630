"""Command-line front end.

Subcommands:
    extract    probe a denoiser and write a TEDF feature volume
    train-toy  train a toy denoiser on a synthetic corpus

Flag style, booleans, and exit codes mirror the propagation engine's
CLI so the two tools compose in scripts.

Exit codes: 0 ok, 2 missing file, 3 format error, 4 shape error,
5 config error, 6 data error, 8 backbone weights unavailable,
1 anything else.
"""

import argparse
import os
import sys

from .errors import (BackboneUnavailableError, ConfigError, DataError,
                     FormatError, ProbeError, ShapeError)
from .features import (BACKBONES, BackboneSpec, extract_appearance_features,
                       extract_motion_features)
from .tedfio import load_frame_dir, save_features
from .train import (TrainConfig, train_toy_image_diffusion,
                    train_toy_video_diffusion)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def cmd_extract(args) -> int:
    frames = load_frame_dir(args.frames)
    video_id = args.video_id
    if video_id is None:
        video_id = os.path.basename(os.path.normpath(args.frames))
    spec = BackboneSpec(kind=args.backbone, weights=args.weights or "",
                        block=args.block).validate()
    common = dict(tau=args.tau, seed=args.seed, grid=args.grid,
                  normalize=args.normalize, center=args.center,
                  video_id=video_id)
    if BACKBONES[spec.kind].route == "video":
        data, meta = extract_motion_features(frames, spec,
                                             n_samples=args.samples,
                                             **common)
    else:
        if args.samples != 1:
            raise ConfigError("--samples applies to video backbones only")
        data, meta = extract_appearance_features(frames, spec, **common)
    save_features(args.out, data, meta)
    t, c, h, w = data.shape
    print(f"{args.out}: {t} frames, {c} channels on {h}x{w}, "
          f"tau {meta.noise_step}, block {meta.block_index}")
    return 0


def cmd_train_toy(args) -> int:
    cfg = TrainConfig(steps=args.steps, seed=args.seed,
                      batch_size=args.batch, clip_frames=args.clip_frames,
                      base_channels=args.channels,
                      resolution=args.resolution, lr=args.lr,
                      schedule_steps=args.schedule_steps,
                      beta_start=args.beta_start, beta_end=args.beta_end)
    train = {"video": train_toy_video_diffusion,
             "image": train_toy_image_diffusion}[args.variant]
    losses = train(args.data, args.out, cfg, verbose=args.verbose)
    if args.log:
        with open(args.log, "w") as fh:
            for value in losses:
                fh.write(f"{value:.6f}\n")
    first = sum(losses[:50]) / max(len(losses[:50]), 1) if losses else 0.0
    last = sum(losses[-50:]) / max(len(losses[-50:]), 1) if losses else 0.0
    print(f"{args.out}: {args.variant} variant, {len(losses)} steps, "
          f"loss {first:.4f} -> {last:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffprobe",
        description="diffusion feature extraction for label propagation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="write TEDF features for one video")
    p.add_argument("--frames", required=True,
                   help="directory of frame_*.ppm files")
    p.add_argument("--out", required=True, help="output .tedf path")
    p.add_argument("--backbone", default="toy3d", choices=sorted(BACKBONES))
    p.add_argument("--weights", default=None,
                   help="toy checkpoint path from train-toy")
    p.add_argument("--tau", type=int, default=None,
                   help="noise step (default: 900 video, 51 image)")
    p.add_argument("--block", type=int, default=None,
                   help="decoder block to capture (default per backbone)")
    p.add_argument("--samples", type=int, default=1,
                   help="noise draws to average (video backbones)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=32,
                   help="exported feature resolution")
    p.add_argument("--normalize", type=_parse_bool, default=True,
                   metavar="BOOL",
                   help="unit-normalize channel vectors (default true)")
    p.add_argument("--center", type=_parse_bool, default=True,
                   metavar="BOOL",
                   help="subtract the volume-mean feature (default true)")
    p.add_argument("--video-id", default=None,
                   help="metadata video id (default: frames dir name)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-toy", help="train a toy denoiser")
    p.add_argument("--data", required=True,
                   help="corpus directory with manifest.txt")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--variant", default="video", choices=("video", "image"))
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--clip-frames", type=int, default=8)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--lr", type=float, default=1.0e-3)
    p.add_argument("--schedule-steps", type=int, default=1000)
    p.add_argument("--beta-start", type=float, default=1.0e-4)
    p.add_argument("--beta-end", type=float, default=5.0e-3)
    p.add_argument("--log", default=None,
                   help="write per-step losses to this file")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train_toy)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ShapeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 6
    except BackboneUnavailableError as e:
        print(f"error: {e}", file=sys.stderr)
        return 8
    except ProbeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
