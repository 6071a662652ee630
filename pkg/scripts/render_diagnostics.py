"""Qualitative check sheet for one benchmark video.

Writes, for the chosen video: PCA renderings of the motion and
appearance feature volumes (first and mid frame, joint basis per
volume), the ground-truth overlays, and prediction overlays from a
fresh propagation run.  Colors that stay coherent across the two PCA
frames indicate temporally stable features; prediction overlays that
match the ground-truth overlays indicate the propagation tracked.

    python3 scripts/render_diagnostics.py --video-dir /tmp/desk_bench/video_000 --out /tmp/diag
"""

import argparse
import os
import sys

from labelprop.fusion import l2_normalize_channels
from labelprop.propagator import PropagationConfig, run
from labelprop.synthkit import (APPEARANCE_FEATURES, GT_LABELS,
                                MOTION_FEATURES)
from labelprop.tensorio import (load_features, load_frame_dir, load_labels,
                                write_ppm)
from labelprop.viz import overlay_masks, pca_rgb


def save(img, path):
    with open(path, "wb") as fh:
        write_ppm(img, fh)
    print(f"wrote {path}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--video-dir", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--temp", type=float, default=0.1)
    ap.add_argument("--alpha", type=float, default=0.5)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    gt = load_labels(os.path.join(args.video_dir, GT_LABELS))
    frames = load_frame_dir(args.video_dir)
    mid = gt.num_frames // 2 + 1

    for tag, name in (("motion", MOTION_FEATURES),
                      ("appearance", APPEARANCE_FEATURES)):
        vol = load_features(os.path.join(args.video_dir, name))
        img_a, img_b, _ = pca_rgb(vol.data[0], vol.data[mid - 1])
        save(img_a, os.path.join(args.out, f"pca_{tag}_frame1.ppm"))
        save(img_b, os.path.join(args.out, f"pca_{tag}_frame{mid}.ppm"))

    vol = l2_normalize_channels(
        load_features(os.path.join(args.video_dir, MOTION_FEATURES)))
    res = run(vol, gt.ids[0], gt.num_objects,
              PropagationConfig(temperature=args.temp))
    for t in range(gt.num_frames):
        save(overlay_masks(frames[t], gt.ids[t], args.alpha),
             os.path.join(args.out, f"gt_{t:05d}.ppm"))
        save(overlay_masks(frames[t], res.masks.ids[t], args.alpha),
             os.path.join(args.out, f"pred_{t:05d}.ppm"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
