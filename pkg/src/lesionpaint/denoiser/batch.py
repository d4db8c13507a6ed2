"""Denoiser I/O unit and the analytic Gaussian-posterior denoiser."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from ..errors import ParameterError, ShapeError
from ..schedule import NoiseSchedule, eps_from_x0


@dataclass(frozen=True)
class SliceBatch:
    """A stack of ``B`` 2D multicontrast slices with conditioning masks.

    images: ``(B, C, H, W)`` normalized intensities (noisy during sampling/training)
    masks: ``(B, H, W)`` conditioning mask in {0, 1}
    timesteps: ``(B,)`` integers in ``[1, T]``; ``None`` for clean training slices
    channel_present: ``(B, C)`` booleans; absent channels are exactly zero
    source: optional per-item ``(view, slice_index)`` provenance
    """

    images: np.ndarray
    masks: np.ndarray
    timesteps: np.ndarray | None
    channel_present: np.ndarray
    source: tuple | None = None

    def __post_init__(self):
        images = np.asarray(self.images)
        if images.ndim != 4:
            raise ShapeError(f"images must be (B, C, H, W), got {images.shape}")
        b, c, h, w = images.shape
        masks = np.asarray(self.masks)
        if masks.shape != (b, h, w):
            raise ShapeError(f"masks must be {(b, h, w)}, got {masks.shape}")
        present = np.asarray(self.channel_present, dtype=bool)
        if present.shape != (b, c):
            raise ShapeError(f"channel_present must be {(b, c)}, got {present.shape}")
        if not present.any(axis=1).all():
            raise ParameterError("every item needs at least one present channel")
        if np.any(images[~present] != 0):
            raise ParameterError("absent channels must be exactly zero")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "channel_present", present)
        if self.timesteps is not None:
            ts = np.broadcast_to(np.asarray(self.timesteps, dtype=np.int64), (b,))
            object.__setattr__(self, "timesteps", ts)

    def __len__(self) -> int:
        return self.images.shape[0]

    def with_images(self, images: np.ndarray, timesteps=None) -> "SliceBatch":
        return replace(self, images=images, timesteps=self.timesteps if timesteps is None else timesteps)

    def check_timesteps(self, T: int) -> np.ndarray:
        if self.timesteps is None:
            raise ParameterError("batch has no timesteps assigned")
        ts = self.timesteps
        if np.any(ts < 1) or np.any(ts > T):
            raise ParameterError(f"timesteps must lie in [1, {T}], got {np.unique(ts)}")
        return ts

    @classmethod
    def concat(cls, items, timesteps=None) -> "SliceBatch":
        return cls(
            np.concatenate([i.images for i in items]),
            np.concatenate([i.masks for i in items]),
            timesteps,
            np.concatenate([i.channel_present for i in items]),
            tuple(s for i in items for s in (i.source or (None,) * len(i))),
        )


class Denoiser(Protocol):
    schedule: NoiseSchedule

    def denoise(self, batch: SliceBatch) -> np.ndarray:
        """Noise estimate with the same shape as ``batch.images``."""
        ...


class GaussianPosteriorDenoiser:
    """Exact noise predictor for an independent per-pixel Gaussian prior.

    With prior ``x0 ~ N(mean, std^2)`` the posterior mean is
    ``(std^2 sqrt(a) x_t + (1 - a) mean) / (a std^2 + 1 - a)``; the returned
    noise estimate is the one that maps ``x_t`` to that mean. ``mean`` and
    ``std`` broadcast against ``(C, H, W)``; a ``(C,)`` vector is per channel.
    Ignores the conditioning mask.
    """

    def __init__(self, schedule: NoiseSchedule, mean=0.0, std=1.0):
        self.schedule = schedule
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if np.any(self.std < 0):
            raise ParameterError("prior std must be non-negative")

    def _prior(self, c: int):
        mean, std = self.mean, self.std
        if mean.ndim == 1 and mean.shape[0] == c:
            mean = mean[:, None, None]
        if std.ndim == 1 and std.shape[0] == c:
            std = std[:, None, None]
        return mean, std

    def posterior_mean(self, x_t: np.ndarray, t) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        a = np.asarray(self.schedule.ab(t), dtype=np.float64)
        a = a.reshape(a.shape + (1,) * (x_t.ndim - a.ndim))
        mean, std = self._prior(x_t.shape[-3] if x_t.ndim >= 3 else 1)
        var = std**2
        return (var * np.sqrt(a) * x_t + (1.0 - a) * mean) / (a * var + 1.0 - a)

    def denoise(self, batch: SliceBatch) -> np.ndarray:
        ts = batch.check_timesteps(self.schedule.T)
        x0 = self.posterior_mean(batch.images, ts)
        eps = eps_from_x0(batch.images, x0, ts, self.schedule)
        eps[~batch.channel_present] = 0.0
        return eps
