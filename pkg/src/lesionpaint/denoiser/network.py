"""Small time-embedded encoder-decoder noise predictor."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..schedule import NoiseSchedule
from .batch import SliceBatch


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, temb_dim: int, groups: int = 8):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.temb = nn.Linear(temb_dim, cout)
        self.norm2 = nn.GroupNorm(groups, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class TinyUNet(nn.Module):
    """Two-level U-Net. Input is the C image channels plus one mask channel."""

    def __init__(self, channels: int = 3, base: int = 16, temb_dim: int = 64):
        super().__init__()
        self.channels = channels
        self.base = base
        self.temb_dim = temb_dim
        self.time_mlp = nn.Sequential(nn.Linear(temb_dim, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim))
        self.inc = nn.Conv2d(channels + 1, base, 3, padding=1)
        self.enc1 = ResBlock(base, base, temb_dim)
        self.down = nn.Conv2d(base, 2 * base, 3, stride=2, padding=1)
        self.enc2 = ResBlock(2 * base, 2 * base, temb_dim)
        self.mid = ResBlock(2 * base, 2 * base, temb_dim)
        self.up = nn.Conv2d(2 * base, base, 3, padding=1)
        self.dec1 = ResBlock(2 * base, base, temb_dim)
        self.out_norm = nn.GroupNorm(8, base)
        self.out = nn.Conv2d(base, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, mask: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        h_in, w_in = x.shape[-2:]
        # the single down/up level needs even extents
        pad = (0, w_in % 2, 0, h_in % 2)
        inp = F.pad(torch.cat([x, mask[:, None]], dim=1), pad, mode="replicate")
        temb = self.time_mlp(timestep_embedding(t, self.temb_dim))
        h1 = self.enc1(self.inc(inp), temb)
        h2 = self.mid(self.enc2(self.down(h1), temb), temb)
        up = self.up(F.interpolate(h2, scale_factor=2, mode="nearest"))
        h = self.dec1(torch.cat([h1, up], dim=1), temb)
        out = self.out(F.silu(self.out_norm(h)))
        return out[..., :h_in, :w_in]

    def config(self) -> dict:
        return {"channels": self.channels, "base": self.base, "temb_dim": self.temb_dim}


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


class NetworkDenoiser:
    """Wraps a :class:`TinyUNet` behind the numpy ``denoise(batch)`` interface."""

    def __init__(self, model: TinyUNet, schedule: NoiseSchedule, max_batch: int = 64):
        self.model = model.eval()
        self.schedule = schedule
        self.max_batch = max_batch

    def denoise(self, batch: SliceBatch) -> np.ndarray:
        ts = batch.check_timesteps(self.schedule.T)
        present = batch.channel_present
        images = np.where(present[:, :, None, None], batch.images, 0.0)
        out = np.empty(images.shape, dtype=np.float64)
        with torch.no_grad():
            for i in range(0, len(batch), self.max_batch):
                sl = slice(i, i + self.max_batch)
                x = torch.as_tensor(np.array(images[sl], dtype=np.float32))
                m = torch.as_tensor(np.array(batch.masks[sl], dtype=np.float32))
                t = torch.as_tensor(np.array(ts[sl]))
                out[sl] = self.model(x, m, t).numpy()
        out[~present] = 0.0
        return out
