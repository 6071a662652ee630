"""Combining motion and appearance features into one embedding.

The two cue volumes are normalized per pixel, scaled by lam and
(1 - lam), and concatenated along the channel axis.  Dot products in
the fused space then decompose as

    lam^2 * cos_motion + (1 - lam)^2 * cos_appearance

so lam trades off how much each cue drives the affinity, and lam = 1.0
or 0.0 reduces exactly to the single-cue similarity up to scale.
"""

import numpy as np

from .errors import ConfigError, ShapeError
from .tensorio import FeatureMeta, FeatureVolume

EPS = 1e-12


def _unit_channels(data: np.ndarray, eps: float) -> np.ndarray:
    """Scale each pixel's channel vector to unit norm, in float64.

    Pixels with norm below eps are left as zeros rather than blown up.
    """
    out = np.asarray(data, dtype=np.float64).copy()
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    np.divide(out, norm, out=out, where=norm > eps)
    out[np.broadcast_to(norm <= eps, out.shape)] = 0.0
    return out


def l2_normalize_channels(vol: FeatureVolume,
                          eps: float = EPS) -> FeatureVolume:
    """Per-pixel channel normalization; metadata passes through."""
    vol.validate()
    data = _unit_channels(vol.data, eps).astype(np.float32)
    return FeatureVolume(data=data, meta=vol.meta)


def fuse(motion: FeatureVolume, appearance: FeatureVolume, lam: float,
         eps: float = EPS) -> FeatureVolume:
    """Weighted channel concatenation of two normalized cue volumes.

    Output has C_m + C_a channels; any pixel where both cues are
    nonzero lands on a sphere of radius sqrt(lam^2 + (1 - lam)^2).
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"fusion weight must be in [0, 1], got {lam}")
    motion.validate()
    appearance.validate()
    m_shape, a_shape = motion.data.shape, appearance.data.shape
    if (m_shape[0], m_shape[2], m_shape[3]) != \
            (a_shape[0], a_shape[2], a_shape[3]):
        raise ShapeError(f"cue volumes must share (T, h, w): "
                         f"{m_shape} vs {a_shape}")
    fused = np.concatenate([lam * _unit_channels(motion.data, eps),
                            (1.0 - lam) * _unit_channels(appearance.data,
                                                         eps)],
                           axis=1).astype(np.float32)
    src = motion.meta or appearance.meta or FeatureMeta()
    meta = FeatureMeta(video_id=src.video_id,
                       clip_start_frame=src.clip_start_frame,
                       noise_step=src.noise_step,
                       block_index=src.block_index,
                       feature_kind="fused",
                       extra={"fusion_lambda": lam})
    return FeatureVolume(data=fused, meta=meta)
