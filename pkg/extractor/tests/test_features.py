import io

import numpy as np
import pytest

from diffprobe.errors import BackboneUnavailableError, ConfigError
from diffprobe.features import (BACKBONES, BackboneSpec,
                                extract_appearance_features,
                                extract_motion_features, load_backbone)
from diffprobe.tedfio import load_frame_dir, write_features


def _frames(corpus, n=None):
    frames = load_frame_dir(f"{corpus}/video_000")
    return frames if n is None else frames[:n]


def _tedf_bytes(data, meta):
    buf = io.BytesIO()
    write_features(data, meta, buf)
    return buf.getvalue()


def test_backbone_defaults_resolve():
    assert BackboneSpec("toy3d").validate().block == 3
    assert BackboneSpec("toy2d").validate().block == 3
    assert BackboneSpec("adm").validate().block == 8
    assert BackboneSpec("sd").validate().block == 8
    assert BackboneSpec("i2vgen_xl").validate().block == 3
    assert BACKBONES["i2vgen_xl"].max_frames == 16


def test_backbone_spec_rejects_bad_config():
    with pytest.raises(ConfigError):
        BackboneSpec("vqgan").validate()
    with pytest.raises(ConfigError):
        BackboneSpec("toy3d", block=4).validate()
    with pytest.raises(ConfigError):
        BackboneSpec("adm", block=19).validate()


def test_pretrained_backbones_are_environment_errors():
    for kind in ("i2vgen_xl", "svd", "adm", "sd"):
        with pytest.raises(BackboneUnavailableError):
            load_backbone(BackboneSpec(kind, weights="whatever.pt"))


def test_motion_features_shape_and_meta(tiny_video_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    data, meta = extract_motion_features(frames, spec, tau=800, grid=16,
                                         video_id="video_000")
    assert data.shape == (8, 8, 16, 16)
    assert data.dtype == np.float32
    assert meta.noise_step == 800
    assert meta.block_index == 3
    assert meta.feature_kind == "video_diffusion"
    assert meta.video_id == "video_000"
    assert meta.extra["backbone"] == "toy3d"


def test_motion_features_deterministic_bytes(tiny_video_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    a = extract_motion_features(frames, spec, tau=900, n_samples=2, seed=5)
    b = extract_motion_features(frames, spec, tau=900, n_samples=2, seed=5)
    c = extract_motion_features(frames, spec, tau=900, n_samples=2, seed=6)
    assert _tedf_bytes(*a) == _tedf_bytes(*b)
    assert _tedf_bytes(*a) != _tedf_bytes(*c)


def test_motion_features_depend_on_frame_order(tiny_video_ckpt,
                                               tiny_corpus):
    frames = _frames(tiny_corpus)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    a, _ = extract_motion_features(frames, spec, tau=700, seed=1)
    b, _ = extract_motion_features(frames[::-1].copy(), spec, tau=700,
                                   seed=1)
    # reversing time must change some activations somewhere
    assert np.any(a != b[::-1])


def test_appearance_features_frame_order_equivariant(tiny_image_ckpt,
                                                     tiny_corpus):
    frames = _frames(tiny_corpus)
    spec = BackboneSpec("toy2d", tiny_image_ckpt)
    perm = np.array([5, 0, 7, 2, 6, 1, 4, 3])
    a, _ = extract_appearance_features(frames, spec, tau=300, seed=2)
    b, _ = extract_appearance_features(frames[perm].copy(), spec, tau=300,
                                       seed=2)
    assert np.array_equal(a[perm], b)


def test_appearance_meta_defaults(tiny_image_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus, 2)
    spec = BackboneSpec("toy2d", tiny_image_ckpt)
    data, meta = extract_appearance_features(frames, spec)
    assert meta.noise_step == 51
    assert meta.block_index == 3
    assert meta.feature_kind == "image_diffusion"
    assert data.shape[0] == 2


def test_extraction_does_not_mutate_frames(tiny_video_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus)
    keep = frames.copy()
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    extract_motion_features(frames, spec, tau=900, n_samples=2)
    assert np.array_equal(frames, keep)


def test_normalized_features_are_unit_vectors(tiny_video_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus, 4)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    data, _ = extract_motion_features(frames, spec, tau=500)
    norms = np.linalg.norm(data, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-4)
    raw, _ = extract_motion_features(frames, spec, tau=500,
                                     normalize=False, center=False)
    assert not np.allclose(np.linalg.norm(raw, axis=1), 1.0, atol=1e-2)


def test_centering_removes_volume_mean(tiny_video_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus, 4)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    data, _ = extract_motion_features(frames, spec, tau=500,
                                      normalize=False, center=True)
    assert np.allclose(data.mean(axis=(0, 2, 3)), 0.0, atol=1e-5)


def test_route_and_length_errors(tiny_video_ckpt, tiny_image_ckpt,
                                 tiny_corpus):
    frames = _frames(tiny_corpus)
    with pytest.raises(ConfigError):
        extract_motion_features(frames, BackboneSpec("toy2d",
                                                     tiny_image_ckpt))
    with pytest.raises(ConfigError):
        extract_appearance_features(frames, BackboneSpec("toy3d",
                                                         tiny_video_ckpt))
    too_long = np.repeat(frames, 3, axis=0)
    with pytest.raises(ConfigError):
        extract_motion_features(too_long, BackboneSpec("toy3d",
                                                       tiny_video_ckpt))
    with pytest.raises(ConfigError):
        extract_motion_features(frames, BackboneSpec("toy3d",
                                                     tiny_video_ckpt),
                                tau=5000)
    with pytest.raises(ConfigError):
        extract_motion_features(frames, BackboneSpec("toy3d",
                                                     tiny_video_ckpt),
                                n_samples=0)


def test_weights_mismatch_is_config_error(tiny_image_ckpt):
    with pytest.raises(ConfigError):
        load_backbone(BackboneSpec("toy3d", tiny_image_ckpt))
    with pytest.raises(ConfigError):
        load_backbone(BackboneSpec("toy3d"))


def test_grid_resize_changes_resolution(tiny_video_ckpt, tiny_corpus):
    frames = _frames(tiny_corpus, 4)
    spec = BackboneSpec("toy3d", tiny_video_ckpt)
    small, _ = extract_motion_features(frames, spec, tau=400, grid=8)
    big, _ = extract_motion_features(frames, spec, tau=400, grid=24)
    assert small.shape[2:] == (8, 8)
    assert big.shape[2:] == (24, 24)
