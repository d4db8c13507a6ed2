"""Cosine noise schedule and forward-diffusion helpers.

Timestep convention: ``t = 0`` is the clean image, ``t = T`` is maximal noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

MAX_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed cumulative signal fractions for ``t = 0..T``.

    ``alpha_bar`` is the exact closed form ``f(t) / f(0)`` (``alpha_bar[T]`` is
    zero for the cosine schedule). ``alpha_bar_clipped`` is the table rebuilt
    from per-step ratios clipped so that ``1 - a_t / a_{t-1} <= 0.999``; it is
    strictly positive and is the one used for sampling arithmetic.
    """

    T: int
    s: float
    alpha_bar: np.ndarray
    alpha_bar_clipped: np.ndarray

    def __post_init__(self):
        for name in ("alpha_bar", "alpha_bar_clipped"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def betas(self) -> np.ndarray:
        """Clipped per-step noise ratios ``1 - a_t / a_{t-1}`` for ``t = 1..T``."""
        a = self.alpha_bar_clipped
        return 1.0 - a[1:] / a[:-1]

    def ab(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ParameterError(f"timestep out of range [0, {self.T}]: {t}")
        return self.alpha_bar_clipped[t]


def cosine_f(t, T: int, s: float) -> np.ndarray:
    return np.cos((np.asarray(t, dtype=np.float64) / T + s) / (1.0 + s) * np.pi / 2) ** 2


def build_cosine_schedule(T: int = 1000, s: float = 0.008) -> NoiseSchedule:
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ParameterError(f"T must be a positive integer, got {T!r}")
    if not s > 0:
        raise ParameterError(f"cosine offset s must be > 0, got {s!r}")
    f = cosine_f(np.arange(T + 1), T, s)
    alpha_bar = f / f[0]
    alpha_bar[0] = 1.0
    ratios = np.maximum(alpha_bar[1:] / alpha_bar[:-1], 1.0 - MAX_BETA)
    clipped = np.concatenate([[1.0], np.cumprod(ratios)])
    return NoiseSchedule(int(T), float(s), alpha_bar, clipped)


def _bcast(a: np.ndarray, ndim: int) -> np.ndarray:
    # per-item coefficients broadcast over the trailing axes
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(a.shape + (1,) * (ndim - a.ndim)) if a.ndim else a


def q_sample(x0, t, eps, sched: NoiseSchedule) -> np.ndarray:
    """``sqrt(a_t) * x0 + sqrt(1 - a_t) * eps``. ``t`` may be scalar or per-item."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"noise shape {eps.shape} does not match sample shape {x0.shape}")
    a = _bcast(sched.ab(t), x0.ndim)
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def predict_x0_from_eps(x_t, eps_hat, t, sched: NoiseSchedule) -> np.ndarray:
    """Invert the forward process given a noise estimate."""
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"noise shape {eps_hat.shape} does not match sample shape {x_t.shape}")
    a = _bcast(sched.ab(t), x_t.ndim)
    return (x_t - np.sqrt(1.0 - a) * eps_hat) / np.sqrt(a)


def eps_from_x0(x_t, x0_hat, t, sched: NoiseSchedule) -> np.ndarray:
    """Noise implied by ``x_t`` and a clean estimate; requires ``t >= 1``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    a = _bcast(sched.ab(t), x_t.ndim)
    return (x_t - np.sqrt(a) * np.asarray(x0_hat, dtype=np.float64)) / np.sqrt(1.0 - a)
