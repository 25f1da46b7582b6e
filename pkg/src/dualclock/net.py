"""Small convolutional space-time noise predictor for the sprites world.

The network is a two-level U-Net over (frame, height, width) volumes. Spatial
convs run as Conv2d with time folded into the batch, temporal convs as Conv1d
with space folded into the batch; that factorization is several times faster
than Conv3d on CPU, which is where this model is meant to train. The
conditioning frame is concatenated to the noisy input along channels, and the
timestep enters as a learned per-block bias from a sinusoidal embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 6  # noisy frames + condition frame
    out_channels: int = 3
    base_width: int = 20
    mid_width: int = 56
    mid_blocks: int = 3
    temb_dim: int = 64
    temb_hidden: int = 128


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    dtype = t.dtype if t.is_floating_point() else torch.float32
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=dtype, device=t.device) / half
    )
    args = t.to(dtype)[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class SpaceTimeBlock(nn.Module):
    """Residual block: spatial 3x3 conv then temporal 3-tap conv, each with
    GroupNorm/SiLU, plus a timestep bias injected between them."""

    def __init__(self, channels: int, temb_hidden: int):
        super().__init__()
        groups = 4 if channels % 4 == 0 else 1
        self.norm1 = nn.GroupNorm(groups, channels)
        self.spatial = nn.Conv2d(channels, channels, 3, padding=1)
        self.temb_proj = nn.Linear(temb_hidden, channels)
        self.norm2 = nn.GroupNorm(groups, channels)
        self.temporal = nn.Conv1d(channels, channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        B, C, F, H, W = x.shape
        h = self.act(self.norm1(x))
        h = h.transpose(1, 2).reshape(B * F, C, H, W)
        h = self.spatial(h)
        h = h.reshape(B, F, C, H, W).transpose(1, 2)
        h = h + self.temb_proj(temb)[:, :, None, None, None]
        h = self.act(self.norm2(h))
        h = h.permute(0, 3, 4, 1, 2).reshape(B * H * W, C, F)
        h = self.temporal(h)
        h = h.reshape(B, H, W, C, F).permute(0, 3, 4, 1, 2)
        return x + h


class _FoldedConv(nn.Module):
    """Conv2d applied per-frame on a (B, C, F, H, W) volume."""

    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, stride=stride, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, C, F, H, W = x.shape
        y = self.conv(x.transpose(1, 2).reshape(B * F, C, H, W))
        _, C2, H2, W2 = y.shape
        return y.reshape(B, F, C2, H2, W2).transpose(1, 2)


class ToyVideoNet(nn.Module):
    def __init__(self, config: NetConfig = NetConfig()):
        super().__init__()
        self.config = config
        c0, c1 = config.base_width, config.mid_width
        th = config.temb_hidden
        self.temb_mlp = nn.Sequential(
            nn.Linear(config.temb_dim, th), nn.SiLU(), nn.Linear(th, th)
        )
        self.stem = _FoldedConv(config.in_channels, c0, stride=2)
        self.block_hi = SpaceTimeBlock(c0, th)
        self.down = _FoldedConv(c0, c1, stride=2)
        self.mid = nn.ModuleList(SpaceTimeBlock(c1, th) for _ in range(config.mid_blocks))
        self.up = _FoldedConv(c1, c0)
        self.block_out = SpaceTimeBlock(c0, th)
        self.head = _FoldedConv(c0, config.out_channels * 4)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        """x: (B, in_channels, F, H, W) with H, W divisible by 4; t: (B,)."""
        B, _, F, H, W = x.shape
        temb = self.temb_mlp(timestep_embedding(t, self.config.temb_dim))
        h0 = self.stem(x)
        h0 = self.block_hi(h0, temb)
        h = self.down(h0)
        for block in self.mid:
            h = block(h, temb)
        h = nn.functional.interpolate(
            h.transpose(1, 2).reshape(B * F, -1, H // 4, W // 4), scale_factor=2, mode="nearest"
        )
        h = h.reshape(B, F, -1, H // 2, W // 2).transpose(1, 2)
        h = self.up(h) + h0
        h = self.block_out(h, temb)
        h = self.head(h)
        # depth-to-space x2 back to full resolution
        c_out = self.config.out_channels
        h = h.reshape(B, c_out, 2, 2, F, H // 2, W // 2)
        h = h.permute(0, 1, 4, 5, 2, 6, 3).reshape(B, c_out, F, H, W)
        return h

    def describe(self) -> dict:
        return asdict(self.config)
