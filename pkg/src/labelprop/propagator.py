"""Label propagation through feature affinity.

Frame 1's mask is soft-assigned to every later frame: each query pixel
scores all reference pixels inside a square spatial window by feature
dot product, keeps the top-k scores, softmaxes them at a temperature,
and copies the references' label vectors with those weights.
References are the pinned first frame plus a FIFO of recently
predicted frames, so errors can only compound through the FIFO while
the pinned frame anchors the original identities.

Candidate ordering is part of the contract: candidates are enumerated
by (reference insertion index, row, column) ascending, and score ties
keep the earliest candidate.  Both the compiled kernel and the plain
reference implementation follow that order exactly, which makes
predictions reproducible bit for bit across runs and thread counts
(each pixel is computed independently in sequential float64).

Out-of-window candidates are treated as score -inf; since exp(-inf)
is 0 they contribute nothing, so keeping only the valid candidates is
the same computation.
"""

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange

from .errors import ConfigError, DataError, ShapeError
from .tensorio import FeatureVolume, MaskSequence


@dataclass
class PropagationConfig:
    """Knobs for the affinity step and the reference queue."""

    radius: int = 15
    top_k: int = 10
    temperature: float = 0.2
    max_context: int = 7
    pin_first: bool = True
    topk_per_reference: bool = False

    def validate(self) -> "PropagationConfig":
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if not self.temperature > 0.0:
            raise ConfigError(f"temperature must be > 0, "
                              f"got {self.temperature}")
        if self.max_context < 0:
            raise ConfigError(f"max_context must be >= 0, "
                              f"got {self.max_context}")
        if not self.pin_first and self.max_context < 1:
            raise ConfigError("queue would always be empty: max_context "
                              "is 0 and pin_first is off")
        return self


@dataclass
class _Entry:
    frame: int
    feats: np.ndarray   # (h, w, C) float64, channel-last for the kernel
    labels: np.ndarray  # (h, w, L) float64


class ReferenceQueue:
    """Pinned first frame plus a FIFO of the recent reference frames.

    max_context bounds the FIFO part only; with pin_first the queue
    holds at most max_context + 1 entries.  Insertion order (pinned
    entry, then FIFO oldest to newest) defines the reference index used
    for tie-breaking, and eviction of the oldest FIFO entry preserves
    it.
    """

    def __init__(self, max_context: int = 7, pin_first: bool = True):
        self.max_context = max_context
        self.pin_first = pin_first
        self._pinned: Optional[_Entry] = None
        self._fifo: list = []

    def __len__(self) -> int:
        return (self._pinned is not None) + len(self._fifo)

    @property
    def frames(self) -> list:
        return [e.frame for e in self._entries()]

    def _entries(self) -> list:
        return ([self._pinned] if self._pinned is not None else []) \
            + self._fifo

    def push(self, frame: int, feats: np.ndarray,
             labels: np.ndarray) -> None:
        """Add one (features, labels) reference frame.

        feats is (C, h, w), labels is (L, h, w); both are converted to
        the kernel layout here.  A frame number already in the queue is
        skipped.
        """
        if feats.ndim != 3 or labels.ndim != 3:
            raise ShapeError("queue entries must be (C, h, w) features "
                             "and (L, h, w) labels")
        if feats.shape[1:] != labels.shape[1:]:
            raise ShapeError(f"features grid {feats.shape[1:]} != labels "
                             f"grid {labels.shape[1:]}")
        if frame in self.frames:
            return
        entry = _Entry(
            frame=frame,
            feats=np.ascontiguousarray(np.moveaxis(feats, 0, -1),
                                       dtype=np.float64),
            labels=np.ascontiguousarray(np.moveaxis(labels, 0, -1),
                                        dtype=np.float64))
        existing = self._entries()
        if existing and existing[0].feats.shape != entry.feats.shape:
            raise ShapeError(f"entry grid {entry.feats.shape} does not "
                             f"match queue grid {existing[0].feats.shape}")
        if self.pin_first and self._pinned is None:
            self._pinned = entry
            return
        self._fifo.append(entry)
        if len(self._fifo) > self.max_context:
            self._fifo.pop(0)

    def stacked(self) -> tuple:
        """Kernel inputs: ((R, h, w, C) features, (R, h, w, L) labels)."""
        entries = self._entries()
        if not entries:
            raise ConfigError("reference queue is empty")
        return (np.stack([e.feats for e in entries]),
                np.stack([e.labels for e in entries]))


@njit(cache=True, parallel=True)
def _kernel_global(query, refs, labels, radius, top_k, temp, out):
    # query (h, w, C), refs (R, h, w, C), labels (R, h, w, L), all
    # float64 C-contiguous.  Top-k is global across references.  Tie
    # handling: a candidate only displaces the current worst on a
    # strictly larger score, and equal scores insert behind existing
    # ones, so the kept set is the first top_k in enumeration order.
    h, w, c_dim = query.shape
    n_refs = refs.shape[0]
    n_lab = labels.shape[3]
    for p in prange(h * w):
        y = p // w
        x = p % w
        qv = query[y, x]
        y0 = max(0, y - radius)
        y1 = min(h - 1, y + radius)
        x0 = max(0, x - radius)
        x1 = min(w - 1, x + radius)
        nw = x1 - x0 + 1
        sc = np.empty(top_k)
        rr = np.empty(top_k, dtype=np.int64)
        ry = np.empty(top_k, dtype=np.int64)
        rx = np.empty(top_k, dtype=np.int64)
        buf = np.empty(nw)
        n_kept = 0
        for r in range(n_refs):
            for yy in range(y0, y1 + 1):
                for j in range(nw):
                    s = 0.0
                    for c in range(c_dim):
                        s += qv[c] * refs[r, yy, x0 + j, c]
                    buf[j] = s
                for j in range(nw):
                    s = buf[j]
                    if n_kept == top_k:
                        if s <= sc[top_k - 1]:
                            continue
                        i = top_k - 1
                    else:
                        i = n_kept
                        n_kept += 1
                    while i > 0 and sc[i - 1] < s:
                        sc[i] = sc[i - 1]
                        rr[i] = rr[i - 1]
                        ry[i] = ry[i - 1]
                        rx[i] = rx[i - 1]
                        i -= 1
                    sc[i] = s
                    rr[i] = r
                    ry[i] = yy
                    rx[i] = x0 + j
        smax = sc[0]
        wsum = 0.0
        wbuf = np.empty(n_kept)
        for k in range(n_kept):
            e = np.exp((sc[k] - smax) / temp)
            wbuf[k] = e
            wsum += e
        for l in range(n_lab):
            acc = 0.0
            for k in range(n_kept):
                acc += (wbuf[k] / wsum) * labels[rr[k], ry[k], rx[k], l]
            out[y, x, l] = acc


@njit(cache=True, parallel=True)
def _kernel_perref(query, refs, labels, radius, top_k, temp, out):
    # Variant keeping top_k per reference before one joint softmax over
    # the union, so a weak reference still contributes candidates.
    h, w, c_dim = query.shape
    n_refs = refs.shape[0]
    n_lab = labels.shape[3]
    cap = n_refs * top_k
    for p in prange(h * w):
        y = p // w
        x = p % w
        qv = query[y, x]
        y0 = max(0, y - radius)
        y1 = min(h - 1, y + radius)
        x0 = max(0, x - radius)
        x1 = min(w - 1, x + radius)
        nw = x1 - x0 + 1
        sc = np.empty(cap)
        ry = np.empty(cap, dtype=np.int64)
        rx = np.empty(cap, dtype=np.int64)
        rr = np.empty(cap, dtype=np.int64)
        buf = np.empty(nw)
        total = 0
        for r in range(n_refs):
            base = total
            n_kept = 0
            for yy in range(y0, y1 + 1):
                for j in range(nw):
                    s = 0.0
                    for c in range(c_dim):
                        s += qv[c] * refs[r, yy, x0 + j, c]
                    buf[j] = s
                for j in range(nw):
                    s = buf[j]
                    if n_kept == top_k:
                        if s <= sc[base + top_k - 1]:
                            continue
                        i = top_k - 1
                    else:
                        i = n_kept
                        n_kept += 1
                    while i > 0 and sc[base + i - 1] < s:
                        sc[base + i] = sc[base + i - 1]
                        ry[base + i] = ry[base + i - 1]
                        rx[base + i] = rx[base + i - 1]
                        i -= 1
                    sc[base + i] = s
                    ry[base + i] = yy
                    rx[base + i] = x0 + j
            for i in range(n_kept):
                rr[base + i] = r
            total += n_kept
        smax = sc[0]
        for k in range(1, total):
            if sc[k] > smax:
                smax = sc[k]
        wsum = 0.0
        wbuf = np.empty(total)
        for k in range(total):
            e = np.exp((sc[k] - smax) / temp)
            wbuf[k] = e
            wsum += e
        for l in range(n_lab):
            acc = 0.0
            for k in range(total):
                acc += (wbuf[k] / wsum) * labels[rr[k], ry[k], rx[k], l]
            out[y, x, l] = acc


def _dispatch(query_cl: np.ndarray, refs: np.ndarray, labels: np.ndarray,
              cfg: PropagationConfig) -> np.ndarray:
    out = np.empty(query_cl.shape[:2] + (labels.shape[3],))
    kern = _kernel_perref if cfg.topk_per_reference else _kernel_global
    kern(query_cl, refs, labels, cfg.radius, cfg.top_k,
         cfg.temperature, out)
    return out


def predict_frame(query: np.ndarray, queue: ReferenceQueue,
                  cfg: PropagationConfig) -> np.ndarray:
    """Soft labels for one frame from (C, h, w) query features.

    Returns (L, h, w) float64; per-pixel label mass sums to 1 whenever
    the reference labels do, because softmax weights are convex.
    """
    cfg.validate()
    refs, labels = queue.stacked()
    if query.ndim != 3:
        raise ShapeError(f"query must be (C, h, w), got {query.shape}")
    if (query.shape[1], query.shape[2], query.shape[0]) != refs.shape[1:]:
        raise ShapeError(f"query {query.shape} does not match reference "
                         f"grid {refs.shape[1:]} (h, w, C)")
    query_cl = np.ascontiguousarray(np.moveaxis(query, 0, -1),
                                    dtype=np.float64)
    out = _dispatch(query_cl, refs, labels, cfg)
    return np.ascontiguousarray(np.moveaxis(out, -1, 0))


def reference_predict_frame(query: np.ndarray, queue: ReferenceQueue,
                            cfg: PropagationConfig) -> np.ndarray:
    """Plain numpy transcription of predict_frame's contract.

    Quadratic over pixels and meant for small grids in tests; kept
    deliberately close to the written definition (enumerate, stable
    sort, softmax) rather than to the kernel's streaming structure.
    """
    cfg.validate()
    refs, labels = queue.stacked()
    n_refs, h, w, _ = refs.shape
    n_lab = labels.shape[3]
    query_cl = np.moveaxis(np.asarray(query, dtype=np.float64), 0, -1)
    out = np.zeros((n_lab, h, w))
    for y in range(h):
        for x in range(w):
            qv = query_cl[y, x]
            y0, y1 = max(0, y - cfg.radius), min(h - 1, y + cfg.radius)
            x0, x1 = max(0, x - cfg.radius), min(w - 1, x + cfg.radius)
            scores = []
            coords = []
            for r in range(n_refs):
                for yy in range(y0, y1 + 1):
                    for xx in range(x0, x1 + 1):
                        scores.append(float(qv @ refs[r, yy, xx]))
                        coords.append((r, yy, xx))
            scores = np.asarray(scores)
            if cfg.topk_per_reference:
                per_ref = len(scores) // n_refs
                kept = []
                for r in range(n_refs):
                    lo = r * per_ref
                    order = np.argsort(-scores[lo:lo + per_ref],
                                       kind="stable") + lo
                    kept.extend(order[:cfg.top_k])
                kept = np.asarray(kept)
            else:
                order = np.argsort(-scores, kind="stable")
                kept = order[:cfg.top_k]
            s = scores[kept]
            wgt = np.exp((s - s.max()) / cfg.temperature)
            wgt /= wgt.sum()
            for k, ci in zip(wgt, kept):
                r, yy, xx = coords[ci]
                out[:, y, x] += k * labels[r, yy, xx]
    return out


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix averaging input cells over
    the output cell's footprint."""
    wmat = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            wmat[i, j] = (min(j + 1.0, hi) - max(float(j), lo)) / scale
    return wmat


def downsample_labels(mask: np.ndarray, num_objects: int, out_h: int,
                      out_w: int) -> np.ndarray:
    """One-hot a (H, W) id mask and area-average it to (K+1, out_h,
    out_w), renormalized so each pixel's label mass sums to 1."""
    if mask.ndim != 2:
        raise ShapeError(f"mask must be (H, W), got {mask.shape}")
    h_in, w_in = mask.shape
    if not (1 <= out_h <= h_in and 1 <= out_w <= w_in):
        raise ShapeError(f"output grid {out_h}x{out_w} must be within "
                         f"1..{h_in} x 1..{w_in}")
    if mask.min() < 0 or mask.max() > num_objects:
        raise DataError(f"mask ids outside 0..{num_objects}")
    onehot = np.stack([(mask == l).astype(np.float64)
                       for l in range(num_objects + 1)])
    w_rows = _area_weights(h_in, out_h)
    w_cols = _area_weights(w_in, out_w)
    out = np.einsum("ih,lhw,jw->lij", w_rows, onehot, w_cols,
                    optimize=True)
    out /= out.sum(axis=0, keepdims=True)
    return out


def upsample_bilinear(field: np.ndarray, out_h: int,
                      out_w: int) -> np.ndarray:
    """Bilinear resample of (L, h, w) to (L, out_h, out_w), sampling at
    cell centers (identity when sizes match)."""
    if field.ndim != 3:
        raise ShapeError(f"field must be (L, h, w), got {field.shape}")
    _, h_in, w_in = field.shape

    def axis_weights(n_in, n_out):
        centers = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5,
                          0.0, n_in - 1.0)
        i0 = np.floor(centers).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, centers - i0

    r0, r1, fr = axis_weights(h_in, out_h)
    c0, c1, fc = axis_weights(w_in, out_w)
    fr = fr[None, :, None]
    fc = fc[None, None, :]
    top = field[:, r0][:, :, c0] * (1 - fc) + field[:, r0][:, :, c1] * fc
    bot = field[:, r1][:, :, c0] * (1 - fc) + field[:, r1][:, :, c1] * fc
    return top * (1 - fr) + bot * fr


@dataclass
class PropagationResult:
    masks: MaskSequence
    fields: np.ndarray            # (T, K+1, h, w) float64 soft labels
    frame_ms: Optional[list] = None


def run(features: FeatureVolume, first_masks: np.ndarray, num_objects: int,
        cfg: PropagationConfig, profile: bool = False) -> PropagationResult:
    """Propagate the first-frame mask through a whole feature volume.

    The full-resolution mask is area-downsampled onto the feature grid,
    pushed as the pinned reference, and every later frame is predicted
    from the queue then pushed back in.  Soft fields are bilinearly
    upsampled to the mask resolution and argmaxed (ties to the lowest
    id, which np.argmax's first-hit rule provides).  Frame 1 of the
    output is the input mask verbatim, so a one-frame video round-trips
    unchanged.
    """
    features.validate()
    cfg.validate()
    if first_masks.ndim != 2:
        raise ShapeError(f"first-frame mask must be (H, W), "
                         f"got {first_masks.shape}")
    if num_objects < 1:
        raise ConfigError(f"num_objects must be >= 1, got {num_objects}")
    present = set(np.unique(first_masks).tolist())
    missing = sorted(set(range(1, num_objects + 1)) - present)
    if missing:
        raise DataError(f"objects {missing} absent from first-frame mask")
    if first_masks.max() > num_objects:
        raise DataError(f"mask id {int(first_masks.max())} exceeds "
                        f"num_objects={num_objects}")

    n_frames = features.num_frames
    grid_h, grid_w = features.grid_shape
    full_h, full_w = first_masks.shape
    n_lab = num_objects + 1

    fields = np.empty((n_frames, n_lab, grid_h, grid_w))
    fields[0] = downsample_labels(first_masks, num_objects, grid_h, grid_w)
    queue = ReferenceQueue(cfg.max_context, cfg.pin_first)
    feats64 = np.asarray(features.data, dtype=np.float64)
    queue.push(1, feats64[0], fields[0])

    timings = []
    for t in range(1, n_frames):
        tic = time.perf_counter()
        fields[t] = predict_frame(feats64[t], queue, cfg)
        timings.append((time.perf_counter() - tic) * 1000.0)
        queue.push(t + 1, feats64[t], fields[t])

    ids = np.empty((n_frames, full_h, full_w), dtype=np.uint8)
    ids[0] = first_masks.astype(np.uint8)
    for t in range(1, n_frames):
        up = upsample_bilinear(fields[t], full_h, full_w)
        ids[t] = np.argmax(up, axis=0).astype(np.uint8)
    masks = MaskSequence(ids=ids, num_objects=num_objects).validate()
    return PropagationResult(masks=masks, fields=fields,
                             frame_ms=timings if profile else None)


def warmup_kernels() -> None:
    """Force JIT compilation so timed sections measure only the math."""
    q = np.zeros((2, 2, 1))
    r = np.zeros((1, 2, 2, 1))
    lab = np.ones((1, 2, 2, 1))
    out = np.empty((2, 2, 1))
    _kernel_global(q, r, lab, 1, 1, 1.0, out)
    _kernel_perref(q, r, lab, 1, 1, 1.0, out)
