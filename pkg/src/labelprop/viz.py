"""Qualitative inspection helpers: joint PCA feature maps and mask
overlays.

The PCA view fits one 3-component basis on the pixels of two frames
together and renders both with it, so color correspondence between the
frames is meaningful: two regions sharing a color share feature
structure.  Per-frame bases would make the colors incomparable.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

# 10 visually distinct object colors; object id k uses entry (k-1) mod 10.
PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212),
], dtype=np.uint8)

_EIG_TOL = 1e-10


@dataclass
class PcaBasis:
    """Frozen projection fitted by pca_rgb.

    directions rows are unit eigenvectors (or all-zero for deficient
    ranks) with the largest-magnitude entry made positive; low/high are
    the joint per-component projection extremes used for scaling.
    """

    mean: np.ndarray
    directions: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def transform(self, feats: np.ndarray) -> np.ndarray:
        """Render (C, h, w) features to (h, w, 3) uint8 with this basis."""
        if feats.ndim != 3 or feats.shape[0] != self.mean.shape[0]:
            raise ShapeError(f"features must be ({self.mean.shape[0]}, h, "
                             f"w), got {feats.shape}")
        flat = feats.reshape(feats.shape[0], -1).T.astype(np.float64)
        proj = (flat - self.mean) @ self.directions.T
        span = self.high - self.low
        scaled = np.zeros_like(proj)
        ok = span > 0
        scaled[:, ok] = (proj[:, ok] - self.low[ok]) / span[ok] * 255.0
        img = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
        return img.reshape(feats.shape[1], feats.shape[2], 3)

    def validate(self) -> "PcaBasis":
        for d in self.directions:
            norm = np.linalg.norm(d)
            if norm == 0.0:
                continue
            if abs(norm - 1.0) > 1e-4:
                raise ShapeError(f"direction norm {norm} not unit")
            peak = d[np.argmax(np.abs(d))]
            if peak < 0:
                raise ShapeError("direction sign convention violated")
        gram = self.directions @ self.directions.T
        off = gram - np.diag(np.diag(gram))
        if np.abs(off).max() > 1e-4:
            raise ShapeError("directions are not orthogonal")
        return self


def pca_rgb(feats_a: np.ndarray, feats_b: np.ndarray) -> tuple:
    """Joint 3-component PCA rendering of two (C, h, w) feature maps.

    Returns (rgb_a, rgb_b, PcaBasis); both images share the basis and
    the joint min-max scaling.  Needs C >= 3.  Constant or
    rank-deficient inputs yield zeroed components instead of arbitrary
    noise directions.
    """
    if feats_a.shape != feats_b.shape:
        raise ShapeError(f"feature maps must match: {feats_a.shape} vs "
                         f"{feats_b.shape}")
    if feats_a.ndim != 3:
        raise ShapeError(f"feature maps must be (C, h, w), "
                         f"got {feats_a.shape}")
    c_dim = feats_a.shape[0]
    if c_dim < 3:
        raise ConfigError(f"PCA rendering needs at least 3 channels, "
                          f"got {c_dim}")
    flat = np.concatenate([feats_a.reshape(c_dim, -1).T,
                           feats_b.reshape(c_dim, -1).T]).astype(np.float64)
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = centered.T @ centered / max(len(flat) - 1, 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1][:3]
    directions = np.zeros((3, c_dim))
    tol = _EIG_TOL * max(float(eigval.max()), 1e-30)
    for i, idx in enumerate(order):
        if eigval[idx] <= tol:
            continue
        d = eigvec[:, idx]
        if d[np.argmax(np.abs(d))] < 0:
            d = -d
        directions[i] = d
    proj = centered @ directions.T
    basis = PcaBasis(mean=mean, directions=directions,
                     low=proj.min(axis=0), high=proj.max(axis=0))
    return basis.transform(feats_a), basis.transform(feats_b), basis


def overlay_masks(frame: np.ndarray, mask: np.ndarray,
                  alpha: float = 0.5) -> np.ndarray:
    """Blend palette colors over object pixels of an (H, W, 3) frame."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ShapeError(f"frame must be (H, W, 3), got {frame.shape}")
    if mask.shape != frame.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match frame "
                         f"{frame.shape[:2]}")
    out = frame.astype(np.float64)
    for obj in np.unique(mask):
        if obj == 0:
            continue
        color = PALETTE[(int(obj) - 1) % len(PALETTE)].astype(np.float64)
        sel = mask == obj
        out[sel] = (1.0 - alpha) * out[sel] + alpha * color
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
