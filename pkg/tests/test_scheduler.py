import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from labelprop.errors import ConfigError, ShapeError
from labelprop.scheduler import ClipPlan, plan_clips, slice_clips, \
    stitch_features
from labelprop.tensorio import FeatureMeta, FeatureVolume


def test_exact_division_two_clips():
    plan = plan_clips(30, 16, 2)
    assert plan.clips == [(1, 16), (15, 30)]
    assert plan.clip_lengths() == [16, 16]


def test_tail_clip_appended_when_stride_misses_end():
    plan = plan_clips(40, 16, 2)
    assert plan.clips == [(1, 16), (15, 30), (25, 40)]


def test_short_video_single_clip():
    assert plan_clips(10, 16, 2).clips == [(1, 10)]
    assert plan_clips(16, 16, 2).clips == [(1, 16)]
    assert plan_clips(1, 16, 0).clips == [(1, 1)]


def test_zero_overlap_tiles_exactly():
    plan = plan_clips(32, 16, 0)
    assert plan.clips == [(1, 16), (17, 32)]


def test_consecutive_clips_share_overlap_frames():
    plan = plan_clips(46, 16, 4)
    assert plan.clips == [(1, 16), (13, 28), (25, 40), (31, 46)]
    for (a1, b1), (a2, _) in zip(plan.clips, plan.clips[1:]):
        assert b1 - a2 + 1 >= 4


def test_plan_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        plan_clips(0, 16, 2)
    with pytest.raises(ConfigError):
        plan_clips(30, 0, 0)
    with pytest.raises(ConfigError):
        plan_clips(30, 16, 16)
    with pytest.raises(ConfigError):
        plan_clips(30, 16, -1)


def test_validate_catches_gaps():
    plan = ClipPlan(n_frames=10, window=4, overlap=0,
                    clips=[(1, 4), (6, 10)])
    with pytest.raises(ConfigError):
        plan.validate()
    with pytest.raises(ConfigError):
        ClipPlan(n_frames=10, window=4, overlap=0, clips=[]).validate()
    with pytest.raises(ConfigError):
        ClipPlan(n_frames=10, window=4, overlap=0,
                 clips=[(1, 11)]).validate()


@settings(max_examples=50)
@given(st.data())
def test_plan_covers_every_frame_property(data):
    n = data.draw(st.integers(1, 200))
    window = data.draw(st.integers(1, 40))
    overlap = data.draw(st.integers(0, window - 1))
    plan = plan_clips(n, window, overlap)
    covered = np.zeros(n, dtype=bool)
    for a, b in plan.clips:
        assert 1 <= a <= b <= n
        assert b - a + 1 <= window
        covered[a - 1:b] = True
    assert covered.all()
    if n > window:
        assert all(b - a + 1 == window for a, b in plan.clips)
        stride = window - overlap
        count = (n - window) // stride + 1
        assert len(plan.clips) in (count, count + 1)


def _flat_volume(n, value=None):
    data = np.zeros((n, 1, 2, 2), dtype=np.float32)
    if value is not None:
        data[:] = value
    else:
        data[:] = np.arange(n, dtype=np.float32).reshape(n, 1, 1, 1)
    return FeatureVolume(data=data, meta=FeatureMeta(video_id="v"))


def test_stitch_keeps_earliest_clip_on_overlap():
    plan = plan_clips(30, 16, 2)
    clips = [FeatureVolume(data=np.full((16, 1, 2, 2), 1.0, np.float32)),
             FeatureVolume(data=np.full((16, 1, 2, 2), 2.0, np.float32))]
    out = stitch_features(plan, clips)
    assert (out.data[:16] == 1.0).all()
    assert (out.data[16:] == 2.0).all()


def test_stitch_refresh_prefers_latest_clip():
    plan = plan_clips(30, 16, 2)
    clips = [FeatureVolume(data=np.full((16, 1, 2, 2), 1.0, np.float32)),
             FeatureVolume(data=np.full((16, 1, 2, 2), 2.0, np.float32))]
    out = stitch_features(plan, clips, refresh=True)
    assert (out.data[:14] == 1.0).all()
    assert (out.data[14:] == 2.0).all()


def test_slice_then_stitch_is_identity():
    rng = np.random.default_rng(7)
    vol = FeatureVolume(
        data=rng.standard_normal((40, 3, 4, 4)).astype(np.float32),
        meta=FeatureMeta(video_id="v", feature_kind="oracle_motion"))
    plan = plan_clips(40, 16, 2)
    clips = slice_clips(vol, plan)
    assert [c.meta.clip_start_frame for c in clips] == [0, 14, 24]
    assert [c.num_frames for c in clips] == [16, 16, 16]
    for refresh in (False, True):
        out = stitch_features(plan, clips, refresh=refresh)
        assert np.array_equal(out.data, vol.data)
        assert out.meta.feature_kind == "oracle_motion"


def test_slice_rejects_frame_count_mismatch():
    vol = _flat_volume(20)
    with pytest.raises(ShapeError):
        slice_clips(vol, plan_clips(30, 16, 2))


def test_stitch_rejects_mismatches():
    plan = plan_clips(30, 16, 2)
    good = [_flat_volume(16, 1.0), _flat_volume(16, 2.0)]
    with pytest.raises(ConfigError):
        stitch_features(plan, good[:1])
    with pytest.raises(ShapeError):
        stitch_features(plan, [good[0], _flat_volume(15, 2.0)])
    bad_grid = FeatureVolume(data=np.ones((16, 1, 3, 2), np.float32))
    with pytest.raises(ShapeError):
        stitch_features(plan, [good[0], bad_grid])


@settings(max_examples=30)
@given(st.data())
def test_slice_stitch_roundtrip_property(data):
    n = data.draw(st.integers(1, 60))
    window = data.draw(st.integers(1, 20))
    overlap = data.draw(st.integers(0, window - 1))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
    vol = FeatureVolume(
        data=rng.standard_normal((n, 2, 3, 3)).astype(np.float32))
    plan = plan_clips(n, window, overlap)
    out = stitch_features(plan, slice_clips(vol, plan))
    assert np.array_equal(out.data, vol.data)
