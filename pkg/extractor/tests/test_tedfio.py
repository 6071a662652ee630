import io
import struct

import numpy as np
import pytest

from diffprobe.errors import DataError, FormatError, ShapeError
from diffprobe.tedfio import (FeatureMeta, load_features, load_frame_dir,
                              read_features, read_manifest, read_ppm,
                              save_features, write_features)


def roundtrip(data, meta=None):
    buf = io.BytesIO()
    write_features(data, meta, buf)
    buf.seek(0)
    return read_features(buf)


def test_feature_roundtrip_with_meta():
    rng = np.random.default_rng(3)
    data = rng.standard_normal((2, 5, 4, 6)).astype(np.float32)
    meta = FeatureMeta(video_id="v", clip_start_frame=2, noise_step=900,
                       block_index=3, feature_kind="video_diffusion",
                       extra={"backbone": "toy3d"})
    back, back_meta = roundtrip(data, meta)
    assert np.array_equal(back, data)
    assert back_meta == meta


def test_feature_roundtrip_without_meta():
    data = np.ones((1, 2, 2, 2), dtype=np.float32)
    back, back_meta = roundtrip(data)
    assert back_meta is None
    assert np.array_equal(back, data)


def test_header_layout_matches_engine_format():
    # byte-for-byte the engine's TEDF layout: 32-byte fixed header when
    # metadata is empty, then little-endian float32 payload
    data = np.arange(6, dtype=np.float32).reshape(1, 1, 2, 3)
    buf = io.BytesIO()
    n = write_features(data, None, buf)
    raw = buf.getvalue()
    assert n == len(raw) == 32 + 6 * 4
    assert raw[:4] == b"TEDF"
    assert raw[4] == 1 and raw[5] == 1 and raw[6:8] == b"\x00\x00"
    assert struct.unpack("<I", raw[8:12]) == (4,)
    assert struct.unpack("<4I", raw[12:28]) == (1, 1, 2, 3)
    assert struct.unpack("<I", raw[28:32]) == (0,)
    assert np.array_equal(np.frombuffer(raw[32:], dtype="<f4"),
                          np.arange(6, dtype=np.float32))


def test_meta_json_canonical_order():
    meta = FeatureMeta(video_id="x", extra={"zeta": 1, "alpha": 2})
    text = meta.to_json()
    assert text.index('"video_id"') < text.index('"clip_start_frame"') \
        < text.index('"noise_step"') < text.index('"block_index"') \
        < text.index('"feature_kind"') < text.index('"alpha"') \
        < text.index('"zeta"')
    assert " " not in text


def test_meta_roundtrip_through_json():
    meta = FeatureMeta(video_id="a", clip_start_frame=7, noise_step=51,
                       block_index=8, feature_kind="image_diffusion",
                       extra={"k": "v"})
    assert FeatureMeta.from_json(meta.to_json()) == meta


def test_writer_rejects_bad_volumes():
    with pytest.raises(ShapeError):
        write_features(np.zeros((2, 3, 4), np.float32), None, io.BytesIO())
    bad = np.zeros((1, 1, 2, 2), np.float32)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(DataError):
        write_features(bad, None, io.BytesIO())


def test_reader_rejects_corrupt_streams():
    data = np.zeros((1, 1, 2, 2), np.float32)
    buf = io.BytesIO()
    write_features(data, None, buf)
    raw = bytearray(buf.getvalue())

    with pytest.raises(FormatError):
        read_features(io.BytesIO(b"TEDX" + bytes(raw[4:])))
    bad_version = bytearray(raw)
    bad_version[4] = 9
    with pytest.raises(FormatError):
        read_features(io.BytesIO(bytes(bad_version)))
    with pytest.raises(FormatError):
        read_features(io.BytesIO(bytes(raw[:-2])))
    bad_payload = bytearray(raw)
    bad_payload[-4:] = struct.pack("<f", np.inf)
    with pytest.raises(DataError):
        read_features(io.BytesIO(bytes(bad_payload)))


def test_save_features_file_roundtrip(tmp_path):
    path = str(tmp_path / "f.tedf")
    data = np.full((2, 1, 3, 3), 0.5, np.float32)
    save_features(path, data, FeatureMeta(video_id="vid"))
    back, meta = load_features(path)
    assert np.array_equal(back, data)
    assert meta.video_id == "vid"


def test_read_ppm_and_frame_dir(tmp_path):
    img = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
    blob = b"P6\n4 2\n255\n" + img.tobytes()
    assert np.array_equal(read_ppm(io.BytesIO(blob)), img)

    vid = tmp_path / "v"
    vid.mkdir()
    for t in range(3):
        (vid / f"frame_{t:05d}.ppm").write_bytes(blob)
    frames = load_frame_dir(str(vid))
    assert frames.shape == (3, 2, 4, 3)
    assert np.array_equal(frames[1], img)

    (vid / "frame_00004.ppm").write_bytes(blob)
    with pytest.raises(FormatError):
        load_frame_dir(str(vid))


def test_read_ppm_rejects_bad_headers():
    with pytest.raises(FormatError):
        read_ppm(io.BytesIO(b"P5\n1 1\n255\n\x00"))
    with pytest.raises(FormatError):
        read_ppm(io.BytesIO(b"P6\n1 1\n127\n\x00\x00\x00"))


def test_read_manifest(tmp_path):
    path = tmp_path / "manifest.txt"
    path.write_text("video_000 17 16 64 64\nvideo_001 99 16 64 64\n")
    assert read_manifest(str(path)) == [("video_000", 17), ("video_001", 99)]
    path.write_text("video_000 17\n")
    with pytest.raises(FormatError):
        read_manifest(str(path))
