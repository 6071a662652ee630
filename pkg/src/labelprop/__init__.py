"""Feature-affinity label propagation for video object tracking.

Pipeline: per-pixel feature volumes (from oracles or an external
extractor) drive a windowed top-k softmax transfer of the first
frame's mask through the video, scored with region and boundary
measures on a controlled identical-objects benchmark.
"""

from .errors import (ConfigError, DataError, FormatError, LabelPropError,
                     LengthError, PlacementError, ShapeError)
from .fusion import fuse, l2_normalize_channels
from .metrics import EvalReport, boundary_f, evaluate_sequence, \
    region_similarity
from .propagator import (PropagationConfig, PropagationResult,
                         ReferenceQueue, downsample_labels, predict_frame,
                         reference_predict_frame, run, upsample_bilinear)
from .scheduler import ClipPlan, plan_clips, slice_clips, stitch_features
from .synthkit import (ObjectTrack, SynthConfig, generate_benchmark,
                       generate_video, oracle_appearance_features,
                       oracle_motion_features, read_manifest)
from .tensorio import (FeatureMeta, FeatureVolume, MaskSequence,
                       load_features, load_labels, read_feature_volume,
                       read_label_grid, read_ppm, save_features,
                       save_labels, write_feature_volume, write_label_grid,
                       write_ppm)
from .viz import PALETTE, PcaBasis, overlay_masks, pca_rgb

__version__ = "0.1.0"
