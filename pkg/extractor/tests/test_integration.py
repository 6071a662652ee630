"""Round-trips through the propagation engine's CLI.

The extractor talks to the engine only through files and subprocesses;
these tests prove a diffprobe-written TEDF drives the whole engine
pipeline with zero conversion.
"""

import numpy as np

from diffprobe.features import BackboneSpec, extract_motion_features
from diffprobe.tedfio import load_features, load_frame_dir, save_features

from conftest import run_engine


def test_engine_consumes_probe_features(tiny_video_ckpt, tiny_corpus,
                                        tmp_path):
    vid = f"{tiny_corpus}/video_000"
    frames = load_frame_dir(vid)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    data, meta = extract_motion_features(frames, spec, tau=900,
                                         n_samples=2, grid=16,
                                         video_id="video_000")
    tedf = str(tmp_path / "probe.tedf")
    save_features(tedf, data, meta)

    pred = str(tmp_path / "pred.tedl")
    prop = run_engine("propagate", "--features", tedf,
                      "--labels", f"{vid}/gt.tedl", "--out", pred,
                      "--temp", "0.1", "--radius", "4")
    assert prop.returncode == 0, prop.stderr

    ev = run_engine("eval", "--pred", pred, "--labels", f"{vid}/gt.tedl")
    assert ev.returncode == 0, ev.stderr
    first = ev.stdout.splitlines()[0].split()
    assert first[0] == "Jm"
    assert 0.0 <= float(first[1]) <= 1.0


def test_engine_sweep_reads_probe_tau_files(tiny_video_ckpt, tiny_corpus,
                                            tmp_path):
    # the engine's tau sweep expects diffusion_tau<value>.tedf per video
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    for i in range(3):
        vid = f"{tiny_corpus}/video_{i:03d}"
        frames = load_frame_dir(vid)
        for tau in (300, 900):
            data, meta = extract_motion_features(frames, spec, tau=tau,
                                                 n_samples=1, grid=16,
                                                 video_id=f"video_{i:03d}")
            save_features(f"{vid}/diffusion_tau{tau}.tedf", data, meta)

    csv = str(tmp_path / "tau.csv")
    proc = run_engine("sweep", "--bench-dir", tiny_corpus, "--axis", "tau",
                      "--values", "300,900", "--out", csv,
                      "--temp", "0.1", "--radius", "4")
    assert proc.returncode == 0, proc.stderr
    lines = open(csv).read().strip().splitlines()
    assert lines[0] == "video,axis,value,Jm,Fm,JFm"
    rows = [ln.split(",") for ln in lines[1:]]
    assert [(r[0], r[2]) for r in rows] == [
        (f"video_{i:03d}", str(tau))
        for i in range(3) for tau in (300, 900)]
    assert all(0.0 <= float(r[3]) <= 1.0 for r in rows)


def test_probe_volume_meta_survives_engine_viz(tiny_video_ckpt,
                                               tiny_corpus, tmp_path):
    # viz reads the same TEDF payload; a byte-level consumer beyond
    # propagate proves the format really is shared
    vid = f"{tiny_corpus}/video_001"
    frames = load_frame_dir(vid)
    data, meta = extract_motion_features(
        frames, BackboneSpec("toy3d", tiny_video_ckpt), tau=700, grid=16,
        video_id="video_001")
    tedf = str(tmp_path / "probe.tedf")
    save_features(tedf, data, meta)
    out = tmp_path / "viz"
    proc = run_engine("viz", "--features", tedf, "--frame-a", 1,
                      "--frame-b", 4, "--out-dir", str(out))
    assert proc.returncode == 0, proc.stderr
    assert sorted(p.name for p in out.iterdir()) == [
        "pca_frame_00001.ppm", "pca_frame_00004.ppm"]


def test_probe_reader_accepts_engine_features(tiny_corpus):
    # the oracle volumes the engine generator wrote parse cleanly here
    data, meta = load_features(f"{tiny_corpus}/video_000/"
                               f"oracle_motion.tedf")
    assert data.ndim == 4
    assert meta.feature_kind == "oracle_motion"
    assert np.isfinite(data).all()
