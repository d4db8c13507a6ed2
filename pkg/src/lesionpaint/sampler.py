"""Deterministic DDIM sampling with dual-mask repaint and truncated inversion.

All sampling functions work on slice stacks: images ``(B, C, H, W)`` and
masks ``(B, H, W)``. Noise for slice ``i`` at timestep ``t`` and pass ``k``
comes from its own counter-based stream, so results do not depend on batch
composition or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .denoiser.batch import Denoiser, SliceBatch
from .errors import MaskValidationError, NumericalError, ParameterError, ShapeError
from .schedule import NoiseSchedule, eps_from_x0, predict_x0_from_eps, q_sample


def build_subsequence(T: int, stride: int) -> list[int]:
    """Descending timesteps ``T, T - stride, ...`` with ``floor(T / stride)`` entries.

    A stride larger than ``T`` yields the single entry ``[T]``. The reverse
    transition after the last entry always targets ``t = 0``.
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    n = max(T // stride, 1)
    return [T - k * stride for k in range(n)]


@dataclass(frozen=True)
class SamplerConfig:
    subsequence: tuple[int, ...]
    truncation_tau: int | None = None
    repaint_repeats: int = 2
    seed: int = 0
    x0_clip: float | None = None

    def __post_init__(self):
        seq = tuple(int(t) for t in self.subsequence)
        if not seq:
            raise ParameterError("subsequence must not be empty")
        if any(a <= b for a, b in zip(seq, seq[1:])):
            raise ParameterError("subsequence must be strictly decreasing")
        if seq[-1] < 1:
            raise ParameterError("subsequence entries must be >= 1")
        object.__setattr__(self, "subsequence", seq)
        if self.truncation_tau is not None and self.truncation_tau not in seq:
            raise ParameterError(f"truncation tau {self.truncation_tau} is not in the subsequence")
        if self.repaint_repeats < 1:
            raise ParameterError("repaint_repeats must be >= 1")
        if self.x0_clip is not None and not self.x0_clip > 0:
            raise ParameterError("x0_clip must be positive or None")

    @classmethod
    def from_stride(cls, T: int = 1000, stride: int = 10, tau: int | None = 40,
                    repeats: int = 2, seed: int = 0, x0_clip: float | None = None) -> "SamplerConfig":
        return cls(tuple(build_subsequence(T, stride)), tau, repeats, seed, x0_clip)

    def validate(self, schedule: NoiseSchedule):
        if self.subsequence[0] > schedule.T:
            raise ParameterError(f"subsequence starts at {self.subsequence[0]} > T={schedule.T}")

    def steps_from(self, tau: int | None = None) -> tuple[int, ...]:
        """The subsequence suffix starting at ``tau`` (all of it when ``None``)."""
        if tau is None:
            return self.subsequence
        if tau not in self.subsequence:
            raise ParameterError(f"tau {tau} is not in the subsequence")
        return tuple(t for t in self.subsequence if t <= tau)


@dataclass(frozen=True)
class RepaintMasks:
    """Conditioning mask (``target``) and update region (``repaint``).

    Fields hold same-shaped {0, 1} arrays or :class:`~lesionpaint.volume.MaskVolume`.
    """

    target: object
    repaint: object

    def __post_init__(self):
        t, r = _data(self.target), _data(self.repaint)
        if t.shape != r.shape:
            raise ShapeError(f"target mask {t.shape} and repaint mask {r.shape} differ in shape")

    @classmethod
    def filling(cls, lesions):
        zeros = type(lesions).zeros_like(lesions) if hasattr(type(lesions), "zeros_like") else np.zeros_like(lesions)
        return cls(zeros, lesions)

    @classmethod
    def synthesis(cls, target):
        return cls(target, target)

    @classmethod
    def evolution(cls, target, repaint):
        bad = int(np.count_nonzero(_data(target).astype(bool) & ~_data(repaint).astype(bool)))
        if bad:
            raise MaskValidationError("repaint mask must contain the target mask", bad)
        return cls(target, repaint)

    @property
    def target_array(self) -> np.ndarray:
        return _data(self.target)

    @property
    def repaint_array(self) -> np.ndarray:
        return _data(self.repaint)


def _data(m) -> np.ndarray:
    return np.asarray(getattr(m, "data", m))


def repaint_mix_x0(x0_hat, x0_true, repaint_mask) -> np.ndarray:
    """``x0_hat * M + x0_true * (1 - M)`` as an exact elementwise selection.

    ``repaint_mask`` broadcasts against the images; a ``(B, H, W)`` mask is
    applied to every channel.
    """
    x0_hat = np.asarray(x0_hat)
    x0_true = np.asarray(x0_true)
    if x0_hat.shape != x0_true.shape:
        raise ShapeError(f"estimate {x0_hat.shape} and reference {x0_true.shape} differ in shape")
    m = np.asarray(repaint_mask).astype(bool)
    if m.ndim == x0_hat.ndim - 1:
        m = m[:, None]
    return np.where(m, x0_hat, x0_true)


def _check_finite(a: np.ndarray, t: int, what: str):
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite {what}", timestep=t)


def _zero_absent(x: np.ndarray, present: np.ndarray) -> np.ndarray:
    return np.where(present[:, :, None, None], x, 0.0)


def ddim_update(x0_hat, eps_hat, t_to: int, schedule: NoiseSchedule) -> np.ndarray:
    a = schedule.ab(t_to)
    return np.sqrt(a) * x0_hat + np.sqrt(1.0 - a) * eps_hat


def ddim_step(x_t, t_from: int, t_to: int, denoiser: Denoiser, target_mask, channel_present=None):
    """One deterministic (eta = 0) DDIM transition ``t_from -> t_to``."""
    sched = denoiser.schedule
    if not t_from >= t_to >= 0 or t_from > sched.T:
        raise ParameterError(f"need T >= t_from >= t_to >= 0, got {t_from} -> {t_to}")
    x_t = np.asarray(x_t, dtype=np.float64)
    present = _presence(x_t, channel_present)
    batch = SliceBatch(_zero_absent(x_t, present), np.asarray(target_mask), np.full(len(x_t), t_from), present)
    eps = denoiser.denoise(batch)
    _check_finite(eps, t_from, "noise estimate")
    x0 = predict_x0_from_eps(x_t, eps, t_from, sched)
    out = ddim_update(x0, eps, t_to, sched)
    _check_finite(out, t_from, "DDIM update")
    return out


def _presence(x: np.ndarray, channel_present) -> np.ndarray:
    if channel_present is None:
        return np.ones(x.shape[:2], dtype=bool)
    p = np.asarray(channel_present, dtype=bool)
    return np.broadcast_to(p, x.shape[:2]) if p.ndim == 1 else p


def repaint_ddim_sample(x0_true, masks: RepaintMasks, cfg: SamplerConfig, denoiser: Denoiser, *,
                        channel_present=None, tau: int | None = None, x_start=None,
                        slice_ids=None, stream: int = 0) -> np.ndarray:
    """Repaint-DDIM reverse process over a slice stack.

    At each subsequence step ``t`` the stack is denoised ``cfg.repaint_repeats``
    times. Every pass forms ``x0_hat``, keeps it only inside the repaint mask
    (copying ``x0_true`` elsewhere); all but the last pass re-noise the mixed
    estimate back to ``t`` with fresh noise, the last advances to the next
    subsequence step (or to 0). Voxels outside the repaint mask of the
    returned stack are copies of ``x0_true``.

    ``x_start`` is the noisy stack at ``tau``; when omitted, sampling starts
    from pure noise at the first step.
    """
    sched = denoiser.schedule
    cfg.validate(sched)
    x0_true = np.asarray(x0_true, dtype=np.float64)
    if x0_true.ndim != 4:
        raise ShapeError(f"expected a (B, C, H, W) stack, got {x0_true.shape}")
    b = x0_true.shape[0]
    target = masks.target_array
    repaint = masks.repaint_array
    if target.shape != (b,) + x0_true.shape[2:]:
        raise ShapeError(f"masks {target.shape} are not aligned with stack {x0_true.shape}")
    present = _presence(x0_true, channel_present)
    ids = np.arange(b) if slice_ids is None else np.asarray(slice_ids)
    steps = cfg.steps_from(tau)
    item_shape = x0_true.shape[1:]

    if x_start is None:
        x = rngmod.normal_batch(item_shape, ids, cfg.seed, rngmod.INIT_NOISE, steps[0], sub=stream)
    else:
        x = np.asarray(x_start, dtype=np.float64)
    x = _zero_absent(x, present)
    target_f = target.astype(np.float32)

    x0_mix = x0_true
    for i, t in enumerate(steps):
        t_next = steps[i + 1] if i + 1 < len(steps) else 0
        ts = np.full(b, t)
        for k in range(cfg.repaint_repeats):
            eps = denoiser.denoise(SliceBatch(x, target_f, ts, present))
            _check_finite(eps, t, "noise estimate")
            x0_hat = predict_x0_from_eps(x, eps, t, sched)
            if cfg.x0_clip is not None:
                # keep the update direction consistent with the clipped estimate
                x0_hat = np.clip(x0_hat, -cfg.x0_clip, cfg.x0_clip)
                eps = eps_from_x0(x, x0_hat, t, sched)
            x0_mix = repaint_mix_x0(x0_hat, x0_true, repaint)
            if k < cfg.repaint_repeats - 1:
                noise = rngmod.normal_batch(item_shape, ids, cfg.seed, rngmod.RENOISE, t, k, sub=stream)
                x = q_sample(x0_mix, t, noise, sched)
            else:
                x = ddim_update(x0_mix, eps, t_next, sched)
            x = _zero_absent(x, present)
            _check_finite(x, t, f"sample (pass {k})")
    return repaint_mix_x0(x0_mix, x0_true, repaint)


def truncated_inversion(x_start, tau: int, masks: RepaintMasks, cfg: SamplerConfig, denoiser: Denoiser, *,
                        channel_present=None, slice_ids=None, stream: int = 0) -> np.ndarray:
    """Re-noise ``x_start`` to ``tau`` and run the repaint sampler from there.

    ``x_start`` also serves as the reference copied outside the repaint mask.
    """
    x_start = np.asarray(x_start, dtype=np.float64)
    steps = cfg.steps_from(tau)
    ids = np.arange(len(x_start)) if slice_ids is None else np.asarray(slice_ids)
    noise = rngmod.normal_batch(x_start.shape[1:], ids, cfg.seed, rngmod.TRUNCATION, steps[0], sub=stream)
    x_tau = q_sample(x_start, steps[0], noise, denoiser.schedule)
    return repaint_ddim_sample(x_start, masks, cfg, denoiser, channel_present=channel_present,
                               tau=tau, x_start=x_tau, slice_ids=ids, stream=stream)


def reverse_step_count(cfg: SamplerConfig, tau: int | None = None) -> int:
    return len(cfg.steps_from(tau))
