"""File formats for feature volumes, label grids, and raw frames.

Centralizes all serialization so the on-disk layout is documented in
exactly one place.  Three formats:

TEDF (feature volume, one video or clip)
    bytes 0..3    magic b"TEDF"
    byte  4       format version, u8, must be 1
    byte  5       element dtype code, u8, must be 1 (float32)
    bytes 6..7    reserved, must be zero
    bytes 8..11   rank, u32 little-endian, must be 4
    bytes 12..27  dims, four u32 little-endian: T, C, h, w
    bytes 28..31  metadata length M, u32 little-endian
    M bytes       UTF-8 JSON metadata (M == 0 means no metadata)
    payload       T*C*h*w float32 little-endian, C-order

TEDL (label grid, one video)
    bytes 0..3    magic b"TEDL"
    byte  4       format version, u8, must be 1
    byte  5       element dtype code, u8, must be 2 (uint8)
    bytes 6..7    reserved, must be zero
    bytes 8..11   rank, u32 little-endian, must be 3
    bytes 12..23  dims, three u32 little-endian: T, H, W
    bytes 24..27  number of objects K, u32 little-endian
    bytes 28..31  metadata length M, u32 little-endian
    M bytes       UTF-8 JSON metadata
    payload       T*H*W uint8, C-order, values in {0..K}

PPM (single frame)
    Binary P6, maxval 255.  Frame files in a video directory are named
    frame_00000.ppm, frame_00001.ppm, ... in temporal order.

Integers are little-endian throughout.  Writers emit canonical JSON
metadata: known keys first in a fixed order, extra keys sorted, compact
separators, no ASCII escaping.  Readers reject bad magic/version/dtype
with FormatError, truncated payloads with LengthError, and non-finite
feature values or out-of-range label ids with DataError.
"""

import io
import json
import os
import re
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

import numpy as np

from .errors import DataError, FormatError, LengthError, ShapeError

TEDF_MAGIC = b"TEDF"
TEDL_MAGIC = b"TEDL"
FORMAT_VERSION = 1
DTYPE_F32 = 1
DTYPE_U8 = 2

# Vocabulary used by the feature_kind metadata field.  Not enforced so
# third-party extractors can add kinds without a format bump.
KNOWN_FEATURE_KINDS = (
    "oracle_motion",
    "oracle_appearance",
    "video_diffusion",
    "image_diffusion",
    "fused",
)

_META_KEY_ORDER = ("video_id", "clip_start_frame", "noise_step",
                   "block_index", "feature_kind")


@dataclass
class FeatureMeta:
    """Provenance carried alongside a feature volume."""

    video_id: str = ""
    clip_start_frame: int = 0
    noise_step: int = 0
    block_index: int = 0
    feature_kind: str = "fused"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        """Canonical JSON: fixed key order, extras sorted, compact."""
        items = [(k, getattr(self, k)) for k in _META_KEY_ORDER]
        items += sorted(self.extra.items())
        return json.dumps(dict(items), separators=(",", ":"),
                          ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "FeatureMeta":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"malformed metadata JSON: {e}") from e
        if not isinstance(obj, dict):
            raise FormatError("metadata JSON must be an object")
        kwargs = {}
        for key in _META_KEY_ORDER:
            if key in obj:
                kwargs[key] = obj.pop(key)
        return cls(extra=obj, **kwargs)


@dataclass
class FeatureVolume:
    """Dense per-pixel features for one video or clip.

    data is (T, C, h, w) float32: T frames, C channels on an h x w grid.
    """

    data: np.ndarray
    meta: Optional[FeatureMeta] = None

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_channels(self) -> int:
        return self.data.shape[1]

    @property
    def grid_shape(self) -> tuple:
        return self.data.shape[2], self.data.shape[3]

    def validate(self) -> "FeatureVolume":
        if self.data.ndim != 4:
            raise ShapeError(f"feature volume must be 4-d (T, C, h, w), "
                             f"got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ShapeError(f"feature dims must be positive, "
                             f"got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise DataError("feature volume contains NaN or Inf")
        return self


@dataclass
class MaskSequence:
    """Integer object-id masks for a whole video.

    ids is (T, H, W) uint8 with values in {0..num_objects}; 0 is
    background.  Every object id must occur in the first frame.
    """

    ids: np.ndarray
    num_objects: int
    meta: Optional[dict] = None

    @property
    def num_frames(self) -> int:
        return self.ids.shape[0]

    @property
    def frame_shape(self) -> tuple:
        return self.ids.shape[1], self.ids.shape[2]

    def validate(self) -> "MaskSequence":
        if self.ids.ndim != 3:
            raise ShapeError(f"label grid must be 3-d (T, H, W), "
                             f"got shape {self.ids.shape}")
        if min(self.ids.shape) < 1:
            raise ShapeError(f"label dims must be positive, "
                             f"got {self.ids.shape}")
        if self.num_objects < 1 or self.num_objects > 255:
            raise DataError(f"num_objects must be in 1..255, "
                            f"got {self.num_objects}")
        if self.ids.max(initial=0) > self.num_objects:
            raise DataError(f"label id {int(self.ids.max())} exceeds "
                            f"num_objects={self.num_objects}")
        first = np.unique(self.ids[0])
        missing = sorted(set(range(1, self.num_objects + 1)) - set(first))
        if missing:
            raise DataError(f"objects {missing} absent from first frame")
        return self


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise LengthError(f"stream truncated reading {what}: "
                          f"wanted {n} bytes, got {len(buf)}")
    return buf


def _read_header(stream: BinaryIO, magic: bytes, dtype_code: int,
                 rank: int) -> tuple:
    """Common fixed header; returns (dims, remaining header fields raw)."""
    got = _read_exact(stream, 4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    version, dtype, zero = struct.unpack("<BBH", _read_exact(stream, 4,
                                                             "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if dtype != dtype_code:
        raise FormatError(f"unsupported dtype code {dtype}, "
                          f"expected {dtype_code}")
    if zero != 0:
        raise FormatError("reserved header bytes 6..7 must be zero")
    (got_rank,) = struct.unpack("<I", _read_exact(stream, 4, "rank"))
    if got_rank != rank:
        raise FormatError(f"rank must be {rank}, got {got_rank}")
    dims = struct.unpack(f"<{rank}I", _read_exact(stream, 4 * rank, "dims"))
    if min(dims) < 1:
        raise FormatError(f"dims must be positive, got {dims}")
    return dims


def _read_meta_blob(stream: BinaryIO) -> Optional[str]:
    (meta_len,) = struct.unpack("<I", _read_exact(stream, 4, "meta length"))
    if meta_len == 0:
        return None
    blob = _read_exact(stream, meta_len, "metadata")
    try:
        return blob.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"metadata is not valid UTF-8: {e}") from e


def read_feature_volume(stream: BinaryIO) -> FeatureVolume:
    """Parse one TEDF feature volume from a binary stream."""
    dims = _read_header(stream, TEDF_MAGIC, DTYPE_F32, rank=4)
    text = _read_meta_blob(stream)
    meta = FeatureMeta.from_json(text) if text is not None else None
    count = int(np.prod(dims, dtype=np.int64))
    raw = _read_exact(stream, 4 * count, "feature payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(dims)
    if not np.isfinite(data).all():
        raise DataError("feature payload contains NaN or Inf")
    return FeatureVolume(data=np.ascontiguousarray(data), meta=meta)


def write_feature_volume(vol: FeatureVolume, stream: BinaryIO) -> int:
    """Serialize a feature volume as TEDF; returns bytes written."""
    vol.validate()
    meta_blob = b""
    if vol.meta is not None:
        meta_blob = vol.meta.to_json().encode("utf-8")
    dims = vol.data.shape
    header = (TEDF_MAGIC
              + struct.pack("<BBH", FORMAT_VERSION, DTYPE_F32, 0)
              + struct.pack("<I", 4)
              + struct.pack("<4I", *dims)
              + struct.pack("<I", len(meta_blob)))
    payload = np.ascontiguousarray(vol.data, dtype="<f4").tobytes()
    stream.write(header)
    stream.write(meta_blob)
    stream.write(payload)
    return len(header) + len(meta_blob) + len(payload)


def read_label_grid(stream: BinaryIO) -> MaskSequence:
    """Parse one TEDL label grid from a binary stream."""
    dims = _read_header(stream, TEDL_MAGIC, DTYPE_U8, rank=3)
    (num_objects,) = struct.unpack("<I", _read_exact(stream, 4,
                                                     "object count"))
    text = _read_meta_blob(stream)
    meta = None
    if text is not None:
        try:
            meta = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"malformed metadata JSON: {e}") from e
    count = int(np.prod(dims, dtype=np.int64))
    raw = _read_exact(stream, count, "label payload")
    ids = np.frombuffer(raw, dtype=np.uint8).reshape(dims)
    return MaskSequence(ids=np.ascontiguousarray(ids),
                        num_objects=num_objects, meta=meta).validate()


def write_label_grid(masks: MaskSequence, stream: BinaryIO) -> int:
    """Serialize a label grid as TEDL; returns bytes written."""
    masks.validate()
    meta_blob = b""
    if masks.meta is not None:
        meta_blob = json.dumps(masks.meta, separators=(",", ":"),
                               ensure_ascii=False,
                               sort_keys=True).encode("utf-8")
    dims = masks.ids.shape
    header = (TEDL_MAGIC
              + struct.pack("<BBH", FORMAT_VERSION, DTYPE_U8, 0)
              + struct.pack("<I", 3)
              + struct.pack("<3I", *dims)
              + struct.pack("<I", masks.num_objects)
              + struct.pack("<I", len(meta_blob)))
    payload = np.ascontiguousarray(masks.ids, dtype=np.uint8).tobytes()
    stream.write(header)
    stream.write(meta_blob)
    stream.write(payload)
    return len(header) + len(meta_blob) + len(payload)


def _read_ppm_token(stream: BinaryIO) -> bytes:
    """Next whitespace-delimited token, skipping '#' comment lines."""
    tok = b""
    while True:
        ch = stream.read(1)
        if not ch:
            if tok:
                return tok
            raise LengthError("stream truncated inside PPM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = stream.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_ppm(stream: BinaryIO) -> np.ndarray:
    """Parse a binary P6 PPM into an (H, W, 3) uint8 array."""
    if _read_ppm_token(stream) != b"P6":
        raise FormatError("not a binary P6 PPM")
    try:
        width = int(_read_ppm_token(stream))
        height = int(_read_ppm_token(stream))
        maxval = int(_read_ppm_token(stream))
    except ValueError as e:
        raise FormatError(f"non-numeric PPM header field: {e}") from e
    if width < 1 or height < 1:
        raise FormatError(f"bad PPM size {width}x{height}")
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    raw = _read_exact(stream, height * width * 3, "PPM pixels")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(image: np.ndarray, stream: BinaryIO) -> int:
    """Serialize an (H, W, 3) uint8 image as binary P6; returns bytes."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"PPM image must be (H, W, 3), got {image.shape}")
    if image.dtype != np.uint8:
        raise DataError(f"PPM image must be uint8, got {image.dtype}")
    header = f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    payload = np.ascontiguousarray(image).tobytes()
    stream.write(header)
    stream.write(payload)
    return len(header) + len(payload)


def _atomic_write(path: str, emit) -> int:
    """Write via temp file + rename so readers never see partial files."""
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            n = emit(fh)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return n


def load_features(path: str) -> FeatureVolume:
    with open(path, "rb") as fh:
        return read_feature_volume(fh)


def save_features(path: str, vol: FeatureVolume) -> int:
    return _atomic_write(path, lambda fh: write_feature_volume(vol, fh))


def load_labels(path: str) -> MaskSequence:
    with open(path, "rb") as fh:
        return read_label_grid(fh)


def save_labels(path: str, masks: MaskSequence) -> int:
    return _atomic_write(path, lambda fh: write_label_grid(masks, fh))


_FRAME_RE = re.compile(r"frame_(\d{5})\.ppm$")


def frame_path(video_dir: str, index: int) -> str:
    return os.path.join(video_dir, f"frame_{index:05d}.ppm")


def load_frame_dir(video_dir: str) -> np.ndarray:
    """Read frame_00000.ppm.. from a directory into (T, H, W, 3) uint8.

    Frame numbering must be contiguous from zero.
    """
    names = sorted(n for n in os.listdir(video_dir) if _FRAME_RE.search(n))
    if not names:
        raise FileNotFoundError(f"no frame_*.ppm files in {video_dir}")
    for i, name in enumerate(names):
        if int(_FRAME_RE.search(name).group(1)) != i:
            raise FormatError(f"frame files not contiguous from zero: "
                              f"unexpected {name} at position {i}")
    frames = []
    for name in names:
        with open(os.path.join(video_dir, name), "rb") as fh:
            frames.append(read_ppm(fh))
    if len({f.shape for f in frames}) != 1:
        raise ShapeError("frames in a video must share one size")
    return np.stack(frames)


def save_frame_dir(frames: np.ndarray, video_dir: str) -> None:
    """Write (T, H, W, 3) uint8 frames as numbered PPM files."""
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise ShapeError(f"frames must be (T, H, W, 3), got {frames.shape}")
    os.makedirs(video_dir, exist_ok=True)
    for t in range(frames.shape[0]):
        _atomic_write(frame_path(video_dir, t),
                      lambda fh, t=t: write_ppm(frames[t], fh))


def feature_volume_from_bytes(blob: bytes) -> FeatureVolume:
    return read_feature_volume(io.BytesIO(blob))


def feature_volume_to_bytes(vol: FeatureVolume) -> bytes:
    buf = io.BytesIO()
    write_feature_volume(vol, buf)
    return buf.getvalue()
