"""Region and boundary quality for propagated masks.

J is the Jaccard index of the binary object mask.  F is the boundary
F-measure: boundaries are mask pixels with a 4-connected neighbor
outside the mask (the image border counts as outside), and a boundary
pixel matches if the other boundary comes within Chebyshev distance
tol, with tol = round(0.008 * frame diagonal), at least 1.  Scores
average over objects and over frames 2..N; frame 1 is the given mask
and would only dilute the numbers.

Empty-mask conventions: both masks empty scores 1.0 for both J and F,
exactly one empty scores 0.0.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ShapeError
from .tensorio import MaskSequence

_CROSS = ndimage.generate_binary_structure(2, 1)


def default_boundary_tol(height: int, width: int) -> int:
    return max(1, int(round(0.008 * float(np.hypot(height, width)))))


def region_similarity(pred: np.ndarray, gt: np.ndarray) -> float:
    """Jaccard index of two boolean masks."""
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Pixels of a boolean mask with a 4-neighbor outside it.

    binary_erosion with border_value 0 treats off-image as outside, so
    mask pixels on the image border are boundary too.
    """
    mask = mask.astype(bool)
    interior = ndimage.binary_erosion(mask, _CROSS, border_value=0)
    return mask & ~interior


def boundary_f(pred: np.ndarray, gt: np.ndarray,
               tol: Optional[int] = None) -> float:
    """Boundary F-measure of two boolean masks."""
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if tol is None:
        tol = default_boundary_tol(*pred.shape)
    if tol < 1:
        raise ConfigError(f"boundary tolerance must be >= 1, got {tol}")
    pb = mask_boundary(pred)
    gb = mask_boundary(gt)
    n_pb, n_gb = int(pb.sum()), int(gb.sum())
    if n_pb == 0 and n_gb == 0:
        return 1.0
    if n_pb == 0 or n_gb == 0:
        return 0.0
    box = np.ones((2 * tol + 1, 2 * tol + 1), dtype=bool)
    precision = (pb & ndimage.binary_dilation(gb, box)).sum() / n_pb
    recall = (gb & ndimage.binary_dilation(pb, box)).sum() / n_gb
    if precision + recall == 0:
        return 0.0
    return float(2.0 * precision * recall / (precision + recall))


@dataclass
class EvalReport:
    """Per-object, per-frame scores plus their means.

    j and f are (num_objects, N-1) over frames 2..N in order.
    """

    j: np.ndarray
    f: np.ndarray

    @property
    def j_mean(self) -> float:
        return float(self.j.mean())

    @property
    def f_mean(self) -> float:
        return float(self.f.mean())

    @property
    def jf_mean(self) -> float:
        return 0.5 * (self.j_mean + self.f_mean)

    def per_object(self) -> list:
        return [(k + 1, float(self.j[k].mean()), float(self.f[k].mean()))
                for k in range(self.j.shape[0])]

    def to_text(self) -> str:
        lines = [f"Jm {self.j_mean:.6f}",
                 f"Fm {self.f_mean:.6f}",
                 f"JFm {self.jf_mean:.6f}"]
        for obj, jv, fv in self.per_object():
            lines.append(f"J_obj{obj} {jv:.6f}")
            lines.append(f"F_obj{obj} {fv:.6f}")
        return "\n".join(lines) + "\n"

    def csv_row(self, video_id: str, axis: str, value) -> str:
        return (f"{video_id},{axis},{value},{self.j_mean:.6f},"
                f"{self.f_mean:.6f},{self.jf_mean:.6f}")


def evaluate_sequence(pred: MaskSequence, gt: MaskSequence,
                      tol: Optional[int] = None) -> EvalReport:
    """Score predictions against ground truth over frames 2..N."""
    pred.validate()
    gt.validate()
    if pred.ids.shape != gt.ids.shape:
        raise ShapeError(f"prediction grid {pred.ids.shape} != ground "
                         f"truth grid {gt.ids.shape}")
    if pred.num_objects != gt.num_objects:
        raise ConfigError(f"object counts differ: {pred.num_objects} "
                          f"vs {gt.num_objects}")
    n_frames = gt.num_frames
    if n_frames < 2:
        raise ConfigError("evaluation needs at least 2 frames")
    n_obj = gt.num_objects
    j = np.zeros((n_obj, n_frames - 1))
    f = np.zeros((n_obj, n_frames - 1))
    for k in range(n_obj):
        for t in range(1, n_frames):
            p = pred.ids[t] == k + 1
            g = gt.ids[t] == k + 1
            j[k, t - 1] = region_similarity(p, g)
            f[k, t - 1] = boundary_f(p, g, tol)
    return EvalReport(j=j, f=f)
