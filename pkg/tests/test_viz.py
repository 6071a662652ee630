import numpy as np
import pytest

from labelprop.errors import ConfigError, ShapeError
from labelprop.viz import PALETTE, PcaBasis, overlay_masks, pca_rgb


def _feats(rng, c=5, h=6, w=7):
    return rng.standard_normal((c, h, w))


def test_pca_basis_is_orthonormal_with_sign_convention():
    rng = np.random.default_rng(0)
    _, _, basis = pca_rgb(_feats(rng), _feats(rng))
    basis.validate()
    for d in basis.directions:
        assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-9)
        assert d[np.argmax(np.abs(d))] > 0
    gram = basis.directions @ basis.directions.T
    assert gram == pytest.approx(np.eye(3), abs=1e-9)


def test_pca_images_share_one_basis_and_scaling():
    rng = np.random.default_rng(1)
    a, b = _feats(rng), _feats(rng)
    img_a, img_b, basis = pca_rgb(a, b)
    assert img_a.shape == (6, 7, 3) and img_a.dtype == np.uint8
    assert np.array_equal(basis.transform(a), img_a)
    assert np.array_equal(basis.transform(b), img_b)
    # joint min-max scaling: the extremes across both images hit 0/255
    both = np.concatenate([img_a.reshape(-1, 3), img_b.reshape(-1, 3)])
    assert (both.min(axis=0) == 0).all()
    assert (both.max(axis=0) == 255).all()


def test_pca_identical_regions_share_colors_across_frames():
    # same feature vector in both frames must render to the same pixel
    # color, which is the point of fitting a joint basis
    rng = np.random.default_rng(2)
    a = _feats(rng, c=4, h=4, w=4)
    b = _feats(rng, c=4, h=4, w=4)
    b[:, 2, 2] = a[:, 1, 1]
    img_a, img_b, _ = pca_rgb(a, b)
    assert np.array_equal(img_a[1, 1], img_b[2, 2])


def test_pca_rank_deficient_components_are_zeroed():
    rng = np.random.default_rng(3)
    base = rng.standard_normal((1, 6 * 7))
    coeff = rng.standard_normal((5, 1))
    a = (coeff @ base).reshape(5, 6, 7)  # rank-1 cloud
    img_a, img_b, basis = pca_rgb(a, a)
    assert np.linalg.norm(basis.directions[0]) == pytest.approx(1.0,
                                                                abs=1e-9)
    assert (basis.directions[1] == 0).all()
    assert (basis.directions[2] == 0).all()
    assert (img_a[..., 1] == 0).all() and (img_a[..., 2] == 0).all()


def test_pca_constant_input_renders_black():
    a = np.full((3, 4, 4), 2.5)
    img_a, img_b, basis = pca_rgb(a, a)
    assert (basis.directions == 0).all()
    assert (img_a == 0).all() and (img_b == 0).all()


def test_pca_input_validation():
    rng = np.random.default_rng(4)
    with pytest.raises(ShapeError):
        pca_rgb(_feats(rng), _feats(rng, h=5))
    with pytest.raises(ShapeError):
        pca_rgb(np.zeros((3, 4)), np.zeros((3, 4)))
    with pytest.raises(ConfigError):
        pca_rgb(_feats(rng, c=2), _feats(rng, c=2))


def test_basis_transform_validation():
    rng = np.random.default_rng(5)
    _, _, basis = pca_rgb(_feats(rng), _feats(rng))
    with pytest.raises(ShapeError):
        basis.transform(np.zeros((4, 6, 7)))
    with pytest.raises(ShapeError):
        basis.transform(np.zeros((5, 6)))


def test_overlay_alpha_endpoints():
    rng = np.random.default_rng(6)
    frame = rng.integers(0, 256, (5, 5, 3)).astype(np.uint8)
    mask = np.zeros((5, 5), dtype=np.uint8)
    mask[1:3, 1:3] = 1
    out0 = overlay_masks(frame, mask, alpha=0.0)
    assert np.array_equal(out0, frame)
    out1 = overlay_masks(frame, mask, alpha=1.0)
    assert (out1[mask == 1] == PALETTE[0]).all()
    assert np.array_equal(out1[mask == 0], frame[mask == 0])


def test_overlay_blend_and_palette_cycling():
    frame = np.full((4, 4, 3), 100, dtype=np.uint8)
    mask = np.zeros((4, 4), dtype=np.uint8)
    mask[0, 0] = 1
    mask[1, 1] = 11  # 11 wraps to palette entry 0 as well
    out = overlay_masks(frame, mask, alpha=0.5)
    expect = np.clip(np.rint(0.5 * 100 + 0.5 *
                             PALETTE[0].astype(float)), 0, 255)
    assert np.array_equal(out[0, 0], expect.astype(np.uint8))
    assert np.array_equal(out[1, 1], out[0, 0])
    assert (out[mask == 0] == 100).all()


def test_overlay_validation():
    frame = np.zeros((4, 4, 3), dtype=np.uint8)
    mask = np.zeros((4, 4), dtype=np.uint8)
    with pytest.raises(ConfigError):
        overlay_masks(frame, mask, alpha=-0.1)
    with pytest.raises(ConfigError):
        overlay_masks(frame, mask, alpha=1.5)
    with pytest.raises(ShapeError):
        overlay_masks(np.zeros((4, 4)), mask)
    with pytest.raises(ShapeError):
        overlay_masks(frame, np.zeros((5, 4), dtype=np.uint8))
