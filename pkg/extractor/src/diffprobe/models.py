"""Toy denoisers used as desk-scale diffusion backbones.

Two variants share one 3-level UNet skeleton (full, half, quarter
resolution):

ToyVideoDenoiser   processes a whole clip jointly: a 3x3x3 stem plus a
    temporal convolution in every block and temporal attention at the
    bottleneck let activations depend on motion across frames.
ToyImageDenoiser   runs the same spatial network on each frame
    independently, so activations cannot mix information across time.

Both predict the noise that was added to their input and can return
decoder activations for feature probing.  Decoder blocks are numbered
1..3 from the decoder input; block 3 sits at input resolution.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ShapeError


def timestep_embedding(steps: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer positions, (N,) -> (N, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0)
        * torch.arange(half, dtype=torch.float32) / max(half - 1, 1))
    ang = steps.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _fold_time(x: torch.Tensor) -> torch.Tensor:
    """(B, C, T, H, W) -> (B*T, C, H, W) so 2d layers see frames as batch."""
    b, c, t, h, w = x.shape
    return x.permute(0, 2, 1, 3, 4).reshape(b * t, c, h, w)


def _unfold_time(x: torch.Tensor, batch: int) -> torch.Tensor:
    bt, c, h, w = x.shape
    return x.reshape(batch, bt // batch, c, h, w).permute(0, 2, 1, 3, 4)


class ResBlock(nn.Module):
    """GroupNorm-SiLU-conv pair with an additive timestep shift."""

    def __init__(self, cin: int, cout: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(4, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.embed = nn.Linear(time_dim, cout)
        self.norm2 = nn.GroupNorm(4, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.embed(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class TemporalConv(nn.Module):
    """Residual 3-tap convolution along the frame axis only."""

    def __init__(self, ch: int):
        super().__init__()
        self.conv = nn.Conv3d(ch, ch, (3, 1, 1), padding=(1, 0, 0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv(x)


class TemporalAttention(nn.Module):
    """Self-attention over frames at each spatial site, one head.

    Sinusoidal frame-position encodings are added to the attention
    input so matches can depend on temporal offset; fixed encodings
    keep the layer usable at clip lengths unseen during training.
    """

    def __init__(self, ch: int):
        super().__init__()
        self.norm = nn.LayerNorm(ch)
        self.qkv = nn.Linear(ch, 3 * ch)
        self.proj = nn.Linear(ch, ch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, t, h, w = x.shape
        seq = x.permute(0, 3, 4, 2, 1).reshape(b * h * w, t, c)
        pos = timestep_embedding(torch.arange(t), c).to(seq.dtype)
        y = self.norm(seq) + pos[None]
        q, k, v = self.qkv(y).chunk(3, dim=-1)
        att = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(c), dim=-1)
        seq = seq + self.proj(att @ v)
        return seq.reshape(b, h, w, t, c).permute(0, 4, 3, 1, 2)


class _UNetCore(nn.Module):
    """Shared 3-level spatial skeleton; temporal hooks are no-ops here."""

    NUM_DECODER_BLOCKS = 3

    def __init__(self, base_channels: int = 16, time_dim: int = 64):
        super().__init__()
        if base_channels < 4 or base_channels % 4:
            raise ConfigError(
                f"base_channels must be a positive multiple of 4, "
                f"got {base_channels}")
        c = base_channels
        self.base_channels = c
        self.time_dim = time_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(),
            nn.Linear(time_dim, time_dim))
        self.enc0 = ResBlock(c, c, time_dim)
        self.down1 = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.enc1 = ResBlock(2 * c, 2 * c, time_dim)
        self.down2 = nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1)
        self.mid_a = ResBlock(4 * c, 4 * c, time_dim)
        self.mid_b = ResBlock(4 * c, 4 * c, time_dim)
        self.dec1 = ResBlock(4 * c, 4 * c, time_dim)
        self.up1 = nn.Conv2d(4 * c, 2 * c, 3, padding=1)
        self.dec2 = ResBlock(4 * c, 2 * c, time_dim)
        self.up2 = nn.Conv2d(2 * c, c, 3, padding=1)
        self.dec3 = ResBlock(2 * c, c, time_dim)
        self.out_norm = nn.GroupNorm(4, c)
        self.out_conv = nn.Conv2d(c, 3, 3, padding=1)
        # zero-init the head: an untrained model predicts exactly zero,
        # so its eps-prediction MSE starts at the target variance
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def _check_input(self, x: torch.Tensor, tau: torch.Tensor):
        if x.ndim != 5 or x.shape[1] != 3:
            raise ShapeError(f"input must be (B, 3, T, H, W), "
                             f"got {tuple(x.shape)}")
        if x.shape[3] % 4 or x.shape[4] % 4:
            raise ShapeError(f"spatial size must be divisible by 4, "
                             f"got {tuple(x.shape[3:])}")
        if tau.ndim != 1 or tau.shape[0] != x.shape[0]:
            raise ShapeError(f"tau must be (B,), got {tuple(tau.shape)}")

    def _mix(self, x: torch.Tensor, stage: str, batch: int) -> torch.Tensor:
        return x

    def forward(self, x: torch.Tensor, tau: torch.Tensor,
                return_features: bool = False):
        """eps estimate for a noisy clip, optionally with block features.

        x is (B, 3, T, H, W); tau is (B,) integer noise steps.  When
        return_features is set, also returns {block: (B, C, T, h, w)}
        decoder activations.
        """
        if not torch.is_tensor(tau):
            tau = torch.as_tensor(tau, dtype=torch.long)
        if tau.ndim == 0:
            tau = tau.expand(x.shape[0])
        self._check_input(x, tau)
        b, _, t = x.shape[:3]
        temb = self.time_mlp(timestep_embedding(tau, self.time_dim))
        ftemb = temb.repeat_interleave(t, dim=0)

        h = _fold_time(self._stem(x))
        h = self.enc0(h, ftemb)
        skip0 = h
        h = self.down1(h)
        h = self.enc1(h, ftemb)
        h = self._mix(h, "enc1", b)
        skip1 = h
        h = self.down2(h)
        h = self.mid_a(h, ftemb)
        h = self._mix(h, "mid", b)
        h = self.mid_b(h, ftemb)

        feats = {}
        h = self.dec1(h, ftemb)
        h = self._mix(h, "dec1", b)
        feats[1] = h
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = self.up1(h)
        h = self.dec2(torch.cat([h, skip1], dim=1), ftemb)
        h = self._mix(h, "dec2", b)
        feats[2] = h
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = self.up2(h)
        h = self.dec3(torch.cat([h, skip0], dim=1), ftemb)
        h = self._mix(h, "dec3", b)
        feats[3] = h
        eps = self.out_conv(F.silu(self.out_norm(h)))
        eps = _unfold_time(eps, b)
        if not return_features:
            return eps
        return eps, {k: _unfold_time(v, b) for k, v in feats.items()}

    def _stem(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class ToyVideoDenoiser(_UNetCore):
    """Clip denoiser whose activations can encode motion."""

    KIND = "toy3d"

    def __init__(self, base_channels: int = 16, time_dim: int = 64):
        super().__init__(base_channels, time_dim)
        c = base_channels
        self.stem = nn.Conv3d(3, c, (3, 3, 3), padding=1)
        self.tmix_enc1 = TemporalConv(2 * c)
        self.tattn = TemporalAttention(4 * c)
        self.tmix_dec1 = TemporalConv(4 * c)
        self.tmix_dec2 = TemporalConv(2 * c)
        self.tmix_dec3 = TemporalConv(c)

    def _stem(self, x: torch.Tensor) -> torch.Tensor:
        return self.stem(x)

    def _mix(self, x: torch.Tensor, stage: str, batch: int) -> torch.Tensor:
        layer = {"enc1": self.tmix_enc1, "mid": self.tattn,
                 "dec1": self.tmix_dec1, "dec2": self.tmix_dec2,
                 "dec3": self.tmix_dec3}[stage]
        return _fold_time(layer(_unfold_time(x, batch)))


class ToyImageDenoiser(_UNetCore):
    """Per-frame denoiser; frames never exchange information."""

    KIND = "toy2d"

    def __init__(self, base_channels: int = 16, time_dim: int = 64):
        super().__init__(base_channels, time_dim)
        self.stem = nn.Conv2d(3, base_channels, 3, padding=1)

    def _stem(self, x: torch.Tensor) -> torch.Tensor:
        return _unfold_time(self.stem(_fold_time(x)), x.shape[0])


def build_model(kind: str, base_channels: int = 16,
                time_dim: int = 64) -> _UNetCore:
    if kind == ToyVideoDenoiser.KIND:
        return ToyVideoDenoiser(base_channels, time_dim)
    if kind == ToyImageDenoiser.KIND:
        return ToyImageDenoiser(base_channels, time_dim)
    raise ConfigError(f"no toy model of kind {kind!r}")
