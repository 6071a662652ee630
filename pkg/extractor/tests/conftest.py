import shutil
import subprocess

import pytest
import torch

from diffprobe.train import TrainConfig, train_toy_image_diffusion, \
    train_toy_video_diffusion

torch.set_num_threads(1)

LABELPROP = shutil.which("labelprop")
DIFFPROBE = shutil.which("diffprobe")

# small-but-real training setup shared by the unit tests; acceptance
# tests train their own full-size models
TINY = TrainConfig(steps=30, seed=11, batch_size=2, clip_frames=4,
                   base_channels=8, resolution=16)


def run_engine(*args) -> subprocess.CompletedProcess:
    """Invoke the propagation engine CLI; the only allowed coupling."""
    assert LABELPROP, "labelprop CLI must be installed for these tests"
    return subprocess.run([LABELPROP, *map(str, args)],
                          capture_output=True, text=True)


def run_probe(*args) -> subprocess.CompletedProcess:
    """Invoke this package's own CLI as installed."""
    assert DIFFPROBE, "diffprobe CLI must be installed for these tests"
    return subprocess.run([DIFFPROBE, *map(str, args)],
                          capture_output=True, text=True)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Synthetic corpus written by the engine: 3 videos of 8 frames."""
    out = tmp_path_factory.mktemp("corpus") / "train"
    proc = run_engine("gen", "--out", out, "--videos", 3, "--seed", 5,
                      "--frames", 8)
    assert proc.returncode == 0, proc.stderr
    return str(out)


@pytest.fixture(scope="session")
def tiny_video_ckpt(tiny_corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "toy3d.pt"
    train_toy_video_diffusion(tiny_corpus, str(path), TINY)
    return str(path)


@pytest.fixture(scope="session")
def tiny_image_ckpt(tiny_corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "toy2d.pt"
    train_toy_image_diffusion(tiny_corpus, str(path), TINY)
    return str(path)
