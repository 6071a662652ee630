import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from diffprobe.errors import ConfigError
from diffprobe.schedule import NoiseSchedule, add_noise


def test_linear_schedule_shape_and_endpoints():
    s = NoiseSchedule.linear()
    assert s.num_steps == 1000
    assert s.betas.shape == (1000,)
    assert s.alpha_bar.shape == (1001,)
    assert s.betas[0] == pytest.approx(1.0e-4)
    assert s.betas[-1] == pytest.approx(5.0e-3)


def test_alpha_bar_starts_at_one():
    s = NoiseSchedule.linear()
    assert abs(s.alpha_bar[0] - 1.0) <= 1e-6


def test_alpha_bar_monotone_non_increasing():
    s = NoiseSchedule.linear()
    assert np.all(np.diff(s.alpha_bar) <= 0)
    assert np.all(s.alpha_bar > 0) and np.all(s.alpha_bar <= 1)


def test_classic_endpoints_also_valid():
    # the schedule length is fixed at 1000 but the end points are
    # calibration knobs; the textbook (1e-4, 0.02) pair must also work
    s = NoiseSchedule.linear(1000, 1.0e-4, 2.0e-2)
    assert s.alpha_bar[-1] == pytest.approx(4.0e-5, rel=0.2)


def test_schedule_rejects_bad_args():
    with pytest.raises(ConfigError):
        NoiseSchedule.linear(0)
    with pytest.raises(ConfigError):
        NoiseSchedule.linear(10, 0.0, 0.01)
    with pytest.raises(ConfigError):
        NoiseSchedule.linear(10, 0.02, 0.01)
    with pytest.raises(ConfigError):
        NoiseSchedule(np.array([0.5, 1.5]))


def test_validate_step_range():
    s = NoiseSchedule.linear(100)
    assert s.validate_step(0) == 0
    assert s.validate_step(100) == 100
    for tau in (-1, 101):
        with pytest.raises(ConfigError):
            s.validate_step(tau)


def test_add_noise_tau0_is_identity():
    s = NoiseSchedule.linear()
    x = torch.randn(2, 3, 4, 8, 8, generator=torch.Generator().manual_seed(1))
    noisy, _ = add_noise(x, 0, s, seed=9)
    assert torch.allclose(noisy, x, atol=1e-6)


def test_add_noise_deterministic_given_seed():
    s = NoiseSchedule.linear()
    x = torch.randn(1, 3, 2, 6, 6, generator=torch.Generator().manual_seed(2))
    a, ea = add_noise(x, 500, s, seed=7)
    b, eb = add_noise(x, 500, s, seed=7)
    c, _ = add_noise(x, 500, s, seed=8)
    assert torch.equal(a, b) and torch.equal(ea, eb)
    assert not torch.equal(a, c)


def test_add_noise_does_not_mutate_input():
    s = NoiseSchedule.linear()
    x = torch.randn(1, 3, 2, 4, 4, generator=torch.Generator().manual_seed(3))
    keep = x.clone()
    add_noise(x, 800, s, seed=0)
    assert torch.equal(x, keep)


@pytest.mark.parametrize("tau", [1, 250, 750, 1000])
def test_add_noise_variance_matches_schedule(tau):
    # over 1e5 elements the added-noise variance must track 1 - abar
    s = NoiseSchedule.linear()
    x = torch.zeros(1, 3, 4, 100, 100)
    assert x.numel() >= 100_000
    noisy, _ = add_noise(x, tau, s, seed=123)
    want = 1.0 - s.alpha_bar[tau]
    got = float(noisy.var(unbiased=False))
    assert got == pytest.approx(want, rel=0.03)


def test_add_noise_mixes_signal_and_noise():
    s = NoiseSchedule.linear()
    x = torch.full((1, 3, 2, 50, 50), 2.0)
    noisy, eps = add_noise(x, 600, s, seed=4)
    scale_s = np.sqrt(s.alpha_bar[600])
    scale_n = np.sqrt(1 - s.alpha_bar[600])
    assert torch.allclose(noisy, scale_s * x + scale_n * eps, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(steps=st.integers(1, 50),
       b0=st.floats(1e-6, 0.01), b1=st.floats(0.01, 0.5))
def test_schedule_invariants_property(steps, b0, b1):
    s = NoiseSchedule.linear(steps, b0, b1)
    assert abs(s.alpha_bar[0] - 1.0) <= 1e-6
    assert np.all(np.diff(s.alpha_bar) <= 0)
    assert s.alpha_bar[-1] > 0
