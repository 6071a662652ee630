"""Binary I/O shared with the propagation engine.

The extractor talks to the engine only through files, so this module
re-states the TEDF feature-volume layout and the P6 frame format from
scratch rather than importing the engine package:

TEDF
    bytes 0..3    magic b"TEDF"
    byte  4       format version, u8, must be 1
    byte  5       element dtype code, u8, must be 1 (float32)
    bytes 6..7    reserved, must be zero
    bytes 8..11   rank, u32 little-endian, must be 4
    bytes 12..27  dims, four u32 little-endian: T, C, h, w
    bytes 28..31  metadata length M, u32 little-endian
    M bytes       UTF-8 JSON metadata (M == 0 means no metadata)
    payload       T*C*h*w float32 little-endian, C-order

Metadata JSON is canonical: the five known keys first in a fixed order,
extra keys sorted, compact separators, no ASCII escaping.  Writers here
must stay byte-identical to the engine's writer for equal inputs.
"""

import json
import os
import re
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .errors import DataError, FormatError, ShapeError

TEDF_MAGIC = b"TEDF"
FORMAT_VERSION = 1
DTYPE_F32 = 1

META_KEY_ORDER = ("video_id", "clip_start_frame", "noise_step",
                  "block_index", "feature_kind")


@dataclass
class FeatureMeta:
    """Provenance carried alongside a feature volume."""

    video_id: str = ""
    clip_start_frame: int = 0
    noise_step: int = 0
    block_index: int = 0
    feature_kind: str = "video_diffusion"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        items = [(k, getattr(self, k)) for k in META_KEY_ORDER]
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
        kwargs = {key: obj.pop(key) for key in META_KEY_ORDER if key in obj}
        return cls(extra=obj, **kwargs)


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise FormatError(f"stream truncated reading {what}: "
                          f"wanted {n} bytes, got {len(buf)}")
    return buf


def write_features(data: np.ndarray, meta: FeatureMeta | None,
                   stream: BinaryIO) -> int:
    """Serialize a (T, C, h, w) float array as TEDF; returns bytes written."""
    data = np.asarray(data)
    if data.ndim != 4:
        raise ShapeError(f"feature volume must be 4-d (T, C, h, w), "
                         f"got shape {data.shape}")
    if min(data.shape) < 1:
        raise ShapeError(f"feature dims must be positive, got {data.shape}")
    if not np.isfinite(data).all():
        raise DataError("feature volume contains NaN or Inf")
    meta_blob = meta.to_json().encode("utf-8") if meta is not None else b""
    header = (TEDF_MAGIC
              + struct.pack("<BBH", FORMAT_VERSION, DTYPE_F32, 0)
              + struct.pack("<I", 4)
              + struct.pack("<4I", *data.shape)
              + struct.pack("<I", len(meta_blob)))
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    stream.write(header)
    stream.write(meta_blob)
    stream.write(payload)
    return len(header) + len(meta_blob) + len(payload)


def read_features(stream: BinaryIO) -> tuple[np.ndarray, FeatureMeta | None]:
    """Parse one TEDF volume; returns ((T, C, h, w) float32, meta or None)."""
    if _read_exact(stream, 4, "magic") != TEDF_MAGIC:
        raise FormatError("bad magic, expected TEDF")
    version, dtype, zero = struct.unpack("<BBH",
                                         _read_exact(stream, 4, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if zero != 0:
        raise FormatError("reserved header bytes 6..7 must be zero")
    (rank,) = struct.unpack("<I", _read_exact(stream, 4, "rank"))
    if rank != 4:
        raise FormatError(f"rank must be 4, got {rank}")
    dims = struct.unpack("<4I", _read_exact(stream, 16, "dims"))
    if min(dims) < 1:
        raise FormatError(f"dims must be positive, got {dims}")
    (meta_len,) = struct.unpack("<I", _read_exact(stream, 4, "meta length"))
    meta = None
    if meta_len:
        blob = _read_exact(stream, meta_len, "metadata")
        try:
            meta = FeatureMeta.from_json(blob.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise FormatError(f"metadata is not valid UTF-8: {e}") from e
    count = int(np.prod(dims, dtype=np.int64))
    raw = _read_exact(stream, 4 * count, "feature payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(dims)
    if not np.isfinite(data).all():
        raise DataError("feature payload contains NaN or Inf")
    return np.ascontiguousarray(data), meta


def save_features(path: str, data: np.ndarray,
                  meta: FeatureMeta | None = None) -> int:
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            n = write_features(data, meta, fh)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return n


def load_features(path: str) -> tuple[np.ndarray, FeatureMeta | None]:
    with open(path, "rb") as fh:
        return read_features(fh)


def _read_ppm_token(stream: BinaryIO) -> bytes:
    tok = b""
    while True:
        ch = stream.read(1)
        if not ch:
            if tok:
                return tok
            raise FormatError("stream truncated inside PPM header")
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


_FRAME_RE = re.compile(r"frame_(\d{5})\.ppm$")


def load_frame_dir(video_dir: str) -> np.ndarray:
    """Read frame_00000.ppm.. from a directory into (T, H, W, 3) uint8."""
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


def read_manifest(path: str) -> list[tuple[str, int]]:
    """Benchmark manifest lines: video_id seed frames height width."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise FormatError(f"manifest line needs 5 fields: {line!r}")
            entries.append((parts[0], int(parts[1])))
    return entries
