"""Command-line front end.

Subcommands:
    gen        write a synthetic benchmark corpus with oracles
    propagate  run label propagation over feature volumes
    eval       score predicted labels against ground truth
    viz        PCA feature renderings or mask overlays
    sweep      scan one axis (lambda, overlap, tau) over a corpus
    bench      propagation quality and timing over a corpus

Option precedence, lowest to highest: built-in defaults, --profile,
--config file (key=value lines), explicit flags.

Exit codes: 0 ok, 2 missing file, 3 format error, 4 shape error,
5 config error, 6 data error, 7 placement failure, 1 anything else.
"""

import argparse
import multiprocessing
import os
import sys

import numpy as np

from .errors import (ConfigError, DataError, FormatError, LabelPropError,
                     PlacementError, ShapeError)
from .fusion import fuse, l2_normalize_channels
from .metrics import evaluate_sequence
from .propagator import PropagationConfig, run, warmup_kernels
from .scheduler import plan_clips, slice_clips, stitch_features
from .synthkit import (APPEARANCE_FEATURES, GT_LABELS, MANIFEST,
                       MOTION_FEATURES, SynthConfig, generate_benchmark,
                       read_manifest)
from .tensorio import (load_features, load_frame_dir, load_labels,
                       save_labels, write_ppm)
from .viz import overlay_masks, pca_rgb

SWEEP_CSV_HEADER = "video,axis,value,Jm,Fm,JFm"

# Propagation setups from the source evaluation: davis for natural
# videos, similar for look-alike object sets, kubric for rigid
# multi-object scenes.  noise_step is the video-model noising step the
# profile expects features to come from; propagation itself only uses
# lambda and temp.
PROFILES = {
    "davis": {"lambda": 0.4, "temp": 0.2, "noise_step": 300},
    "similar": {"lambda": 0.6, "temp": 0.1, "noise_step": 600},
    "kubric": {"lambda": 1.0, "temp": 0.1, "noise_step": 900},
}

_BASE = {
    "radius": 15,
    "topk": 10,
    "temp": 0.2,
    "context": 7,
    "lambda": 0.5,
    "window": 16,
    "overlap": 2,
    "pin_first": True,
    "topk_per_reference": False,
    "normalize": True,
    "refresh_overlap": False,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CONFIG_TYPES = {
    "radius": int,
    "topk": int,
    "temp": float,
    "context": int,
    "lambda": float,
    "window": int,
    "overlap": int,
    "pin_first": _parse_bool,
    "topk_per_reference": _parse_bool,
    "normalize": _parse_bool,
    "refresh_overlap": _parse_bool,
}


def _load_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _CONFIG_TYPES[key](val)
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from e
    return out


_FLAG_TO_KEY = [("radius", "radius"), ("topk", "topk"), ("temp", "temp"),
                ("context", "context"), ("lam", "lambda"),
                ("window", "window"), ("overlap", "overlap"),
                ("pin_first", "pin_first"),
                ("topk_per_reference", "topk_per_reference"),
                ("normalize", "normalize"),
                ("refresh_overlap", "refresh_overlap")]


def resolve_options(args) -> dict:
    """Merge defaults, profile, config file, and explicit flags."""
    opts = dict(_BASE)
    profile = getattr(args, "profile", None)
    if profile:
        opts.update({k: v for k, v in PROFILES[profile].items()
                     if k in opts})
    config = getattr(args, "config", None)
    if config:
        opts.update(_load_config_file(config))
    for attr, key in _FLAG_TO_KEY:
        val = getattr(args, attr, None)
        if val is not None:
            opts[key] = val
    return opts


def _prop_config(opts: dict) -> PropagationConfig:
    return PropagationConfig(
        radius=opts["radius"], top_k=opts["topk"], temperature=opts["temp"],
        max_context=opts["context"], pin_first=opts["pin_first"],
        topk_per_reference=opts["topk_per_reference"]).validate()


def _set_compute_threads(workers) -> None:
    if workers is not None:
        import numba
        numba.set_num_threads(max(1, workers))


def _load_stream(paths: list, n_frames: int, opts: dict):
    """One feature stream from one full file or several clip files."""
    vols = [load_features(p) for p in paths]
    if len(vols) == 1:
        vol = vols[0]
    else:
        plan = plan_clips(n_frames, opts["window"], opts["overlap"])
        if len(plan.clips) != len(vols):
            raise ConfigError(
                f"plan for {n_frames} frames (window {opts['window']}, "
                f"overlap {opts['overlap']}) has {len(plan.clips)} clips "
                f"but {len(vols)} feature files were given")
        vol = stitch_features(plan, vols, refresh=opts["refresh_overlap"])
    if vol.num_frames != n_frames:
        raise ShapeError(f"feature stream covers {vol.num_frames} frames, "
                         f"labels cover {n_frames}")
    return vol


def cmd_gen(args) -> int:
    cfg = SynthConfig(seed=args.seed, frames=args.frames,
                      height=args.height, width=args.width,
                      feature_stride=args.stride)
    records = generate_benchmark(cfg, args.videos, args.out)
    print(f"wrote {len(records)} videos to {args.out}")
    return 0


def cmd_propagate(args) -> int:
    opts = resolve_options(args)
    _set_compute_threads(args.workers)
    labels = load_labels(args.labels)
    n_frames = labels.num_frames
    motion = _load_stream(args.features, n_frames, opts)
    if args.features_appearance:
        appearance = _load_stream(args.features_appearance, n_frames, opts)
        feats = fuse(motion, appearance, opts["lambda"])
    elif opts["normalize"]:
        feats = l2_normalize_channels(motion)
    else:
        feats = motion
    warmup_kernels()
    result = run(feats, labels.ids[0], labels.num_objects,
                 _prop_config(opts), profile=args.profile_timing)
    if args.profile_timing:
        for t, ms in enumerate(result.frame_ms, start=2):
            print(f"frame {t} {ms:.2f} ms")
        total = sum(result.frame_ms)
        print(f"total {total:.2f} ms over {len(result.frame_ms)} "
              f"predicted frames")
    save_labels(args.out, result.masks)
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred = load_labels(args.pred)
    gt = load_labels(args.labels)
    report = evaluate_sequence(pred, gt, tol=args.tol)
    text = report.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_viz(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    wrote = []
    if args.features:
        vol = load_features(args.features)
        for frame in (args.frame_a, args.frame_b):
            if not 1 <= frame <= vol.num_frames:
                raise ConfigError(f"frame {frame} outside "
                                  f"1..{vol.num_frames}")
        img_a, img_b, _ = pca_rgb(vol.data[args.frame_a - 1],
                                  vol.data[args.frame_b - 1])
        for tag, img in ((args.frame_a, img_a), (args.frame_b, img_b)):
            path = os.path.join(args.out_dir, f"pca_frame_{tag:05d}.ppm")
            with open(path, "wb") as fh:
                write_ppm(img, fh)
            wrote.append(path)
    elif args.frames_dir:
        frames = load_frame_dir(args.frames_dir)
        masks = load_labels(args.labels)
        if frames.shape[0] != masks.num_frames:
            raise ShapeError(f"{frames.shape[0]} frames vs "
                             f"{masks.num_frames} mask frames")
        for t in range(frames.shape[0]):
            img = overlay_masks(frames[t], masks.ids[t], args.alpha)
            path = os.path.join(args.out_dir, f"overlay_{t:05d}.ppm")
            with open(path, "wb") as fh:
                write_ppm(img, fh)
            wrote.append(path)
    else:
        raise ConfigError("viz needs --features (PCA mode) or "
                          "--frames-dir with --labels (overlay mode)")
    print(f"wrote {len(wrote)} images to {args.out_dir}")
    return 0


def _sweep_feature_paths(video_dir: str, axis: str, tokens: list) -> list:
    """Files one sweep task needs; lets missing ones be reported upfront."""
    if axis == "lambda":
        return [os.path.join(video_dir, MOTION_FEATURES),
                os.path.join(video_dir, APPEARANCE_FEATURES)]
    if axis == "overlap":
        return [os.path.join(video_dir, MOTION_FEATURES)]
    return [os.path.join(video_dir, f"diffusion_tau{tok}.tedf")
            for tok in tokens]


def _sweep_task(task) -> tuple:
    video_id, video_dir, axis, token, opts = task
    warmup_kernels()
    gt = load_labels(os.path.join(video_dir, GT_LABELS))
    local = dict(opts)
    if axis == "lambda":
        local["lambda"] = float(token)
        motion = load_features(os.path.join(video_dir, MOTION_FEATURES))
        appearance = load_features(os.path.join(video_dir,
                                                APPEARANCE_FEATURES))
        feats = fuse(motion, appearance, local["lambda"])
    elif axis == "overlap":
        local["overlap"] = int(token)
        vol = load_features(os.path.join(video_dir, MOTION_FEATURES))
        plan = plan_clips(vol.num_frames, local["window"], local["overlap"])
        feats = stitch_features(plan, slice_clips(vol, plan),
                                refresh=local["refresh_overlap"])
        feats = l2_normalize_channels(feats)
    else:
        vol = load_features(os.path.join(video_dir,
                                         f"diffusion_tau{token}.tedf"))
        feats = l2_normalize_channels(vol)
    result = run(feats, gt.ids[0], gt.num_objects, _prop_config(local))
    report = evaluate_sequence(result.masks, gt)
    return (video_id, token, report.j_mean, report.f_mean, report.jf_mean)


def cmd_sweep(args) -> int:
    opts = resolve_options(args)
    tokens = [tok.strip() for tok in args.values.split(",") if tok.strip()]
    if not tokens:
        raise ConfigError("--values is empty")
    for tok in tokens:
        try:
            float(tok) if args.axis == "lambda" else int(tok)
        except ValueError as e:
            raise ConfigError(f"bad value {tok!r} for axis "
                              f"{args.axis}: {e}") from e
    records = read_manifest(os.path.join(args.bench_dir, MANIFEST))
    missing = []
    tasks = []
    for video_id, _seed, _t, _h, _w in records:
        video_dir = os.path.join(args.bench_dir, video_id)
        for p in ([os.path.join(video_dir, GT_LABELS)]
                  + _sweep_feature_paths(video_dir, args.axis, tokens)):
            if not os.path.exists(p):
                missing.append(p)
        for tok in tokens:
            tasks.append((video_id, video_dir, args.axis, tok, opts))
    if missing:
        raise FileNotFoundError("missing sweep inputs: "
                                + ", ".join(missing[:10])
                                + (" ..." if len(missing) > 10 else ""))
    if args.workers and args.workers > 1:
        with multiprocessing.Pool(args.workers) as pool:
            results = pool.map(_sweep_task, tasks)
    else:
        results = [_sweep_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], float(r[1])))
    tmp = args.out + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for video_id, token, jm, fm, jfm in results:
            fh.write(f"{video_id},{args.axis},{token},{jm:.6f},"
                     f"{fm:.6f},{jfm:.6f}\n")
    os.replace(tmp, args.out)
    print(f"wrote {len(results)} rows to {args.out}")
    return 0


def cmd_bench(args) -> int:
    opts = resolve_options(args)
    _set_compute_threads(args.workers)
    cfg = _prop_config(opts)
    records = read_manifest(os.path.join(args.bench_dir, MANIFEST))
    warmup_kernels()
    lines = []
    j_all, f_all, ms_all = [], [], []
    for video_id, _seed, _t, _h, _w in records:
        video_dir = os.path.join(args.bench_dir, video_id)
        gt = load_labels(os.path.join(video_dir, GT_LABELS))
        vol = l2_normalize_channels(
            load_features(os.path.join(video_dir, args.stream)))
        result = run(vol, gt.ids[0], gt.num_objects, cfg, profile=True)
        report = evaluate_sequence(result.masks, gt)
        total_ms = sum(result.frame_ms)
        mean_ms = total_ms / max(len(result.frame_ms), 1)
        j_all.append(report.j_mean)
        f_all.append(report.f_mean)
        ms_all.append(total_ms)
        lines.append(f"{video_id} Jm {report.j_mean:.6f} "
                     f"Fm {report.f_mean:.6f} JFm {report.jf_mean:.6f} "
                     f"total_ms {total_ms:.1f} mean_frame_ms {mean_ms:.2f}")
        if args.profile_timing:
            for t, ms in enumerate(result.frame_ms, start=2):
                lines.append(f"  frame {t} {ms:.2f} ms")
    jm, fm = float(np.mean(j_all)), float(np.mean(f_all))
    lines.append(f"overall Jm {jm:.6f} Fm {fm:.6f} "
                 f"JFm {0.5 * (jm + fm):.6f} "
                 f"total_ms {sum(ms_all):.1f} videos {len(records)}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def _add_prop_flags(sub) -> None:
    sub.add_argument("--profile", choices=sorted(PROFILES))
    sub.add_argument("--config", help="key=value overrides, one per line")
    sub.add_argument("--radius", type=int, default=None)
    sub.add_argument("--topk", type=int, default=None)
    sub.add_argument("--temp", type=float, default=None)
    sub.add_argument("--context", type=int, default=None)
    sub.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="motion weight for cue fusion, in [0, 1]")
    sub.add_argument("--window", type=int, default=None)
    sub.add_argument("--overlap", type=int, default=None)
    sub.add_argument("--no-pin-first", dest="pin_first",
                     action="store_false", default=None)
    sub.add_argument("--topk-per-reference", action="store_true",
                     default=None)
    sub.add_argument("--no-normalize", dest="normalize",
                     action="store_false", default=None,
                     help="skip per-pixel normalization of a single stream")
    sub.add_argument("--refresh-overlap", action="store_true", default=None,
                     help="later clips overwrite overlapped frames")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelprop",
        description="feature-affinity label propagation toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="write a synthetic benchmark corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = subs.add_parser("propagate", help="propagate first-frame labels")
    p.add_argument("--features", nargs="+", required=True,
                   help="motion/primary stream; several files are clips")
    p.add_argument("--features-appearance", nargs="+", default=None)
    p.add_argument("--labels", required=True,
                   help="TEDL with the first-frame mask and object count")
    p.add_argument("--out", required=True)
    p.add_argument("--profile-timing", action="store_true")
    p.add_argument("--workers", type=int, default=None,
                   help="compute threads for the affinity kernel")
    _add_prop_flags(p)
    p.set_defaults(func=cmd_propagate)

    p = subs.add_parser("eval", help="score predictions against GT")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", default=None, help="report file")
    p.add_argument("--tol", type=int, default=None,
                   help="boundary tolerance in pixels")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("viz", help="PCA feature maps or mask overlays")
    p.add_argument("--features", default=None)
    p.add_argument("--frame-a", type=int, default=1)
    p.add_argument("--frame-b", type=int, default=2)
    p.add_argument("--frames-dir", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_viz)

    p = subs.add_parser("sweep", help="scan one axis over a corpus")
    p.add_argument("--bench-dir", required=True)
    p.add_argument("--axis", choices=("lambda", "overlap", "tau"),
                   required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated axis values")
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--workers", type=int, default=None,
                   help="process pool size")
    _add_prop_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("bench", help="quality and timing over a corpus")
    p.add_argument("--bench-dir", required=True)
    p.add_argument("--stream", default=MOTION_FEATURES,
                   help="feature file name inside each video directory")
    p.add_argument("--out", default=None)
    p.add_argument("--profile-timing", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    _add_prop_flags(p)
    p.set_defaults(func=cmd_bench)

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
    except PlacementError as e:
        print(f"error: {e}", file=sys.stderr)
        return 7
    except LabelPropError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
