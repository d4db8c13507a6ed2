"""Training data extraction, contrast dropout, lesion-weighted loss and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import torch

from .. import rng as rngmod
from ..errors import ParameterError, ShapeError, TrainingError
from ..schedule import NoiseSchedule, q_sample
from ..volume import VIEWS, MaskVolume, MultiContrastVolume, Orientation, reorient
from .batch import SliceBatch
from .network import TinyUNet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lesion_weight: float = 10.0
    learning_rate: float = 3e-4
    batch_size: int = 32
    epochs: int = 300
    dropout_prob: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not self.lesion_weight >= 1:
            raise ParameterError(f"lesion_weight must be >= 1, got {self.lesion_weight}")
        if not 0 <= self.dropout_prob < 1:
            raise ParameterError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("learning_rate > 0, batch_size >= 1 and epochs >= 0 required")


def extract_training_slices(vol: MultiContrastVolume, mask: MaskVolume,
                            min_foreground: float = 0.05) -> list[SliceBatch]:
    """Cut clean single-slice batches from all three cardinal views.

    Foreground is any voxel whose raw intensity is nonzero in a present
    contrast; slices whose foreground fraction is below ``min_foreground`` are
    dropped. Images are returned normalized to ``[-1, 1]``.
    """
    if vol.shape != mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match volume {vol.shape}")
    raw = vol.denormalized().reoriented(Orientation.AXIAL)
    norm = vol.normalized().reoriented(Orientation.AXIAL)
    mask = reorient(mask, Orientation.AXIAL)
    present = np.array(vol.presence)
    fg = np.any(raw.stack()[present] != 0, axis=0).astype(np.uint8)
    items = []
    for view in VIEWS:
        img = norm.reoriented(view).stack()
        m = reorient(mask, view).data
        f = reorient(MaskVolume(fg), view).data
        frac = f.reshape(-1, f.shape[-1]).mean(axis=0)
        for k in np.flatnonzero(frac >= min_foreground):
            items.append(SliceBatch(
                img[None, ..., k].astype(np.float32),
                m[None, ..., k],
                None,
                present[None],
                ((view.value, int(k)),),
            ))
    return items


def apply_contrast_dropout(batch: SliceBatch, p: float, rng: np.random.Generator) -> SliceBatch:
    """Zero each present contrast independently with probability ``p``.

    When every present contrast of an item would be dropped, one of them,
    chosen uniformly, is kept.
    """
    if not 0 <= p < 1:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0:
        return batch
    present = batch.channel_present
    keep = present & (rng.random(present.shape) >= p)
    for i in np.flatnonzero(~keep.any(axis=1)):
        candidates = np.flatnonzero(present[i])
        keep[i, rng.choice(candidates)] = True
    images = np.where(keep[:, :, None, None], batch.images, 0.0).astype(batch.images.dtype)
    return replace(batch, images=images, channel_present=keep)


def loss_weights(masks, lesion_weight: float):
    """``1 + (lesion_weight - 1) * M``."""
    return 1.0 + (lesion_weight - 1.0) * masks


def weighted_mse(eps, eps_hat, masks, present, lesion_weight: float):
    """Mean over present-channel pixels of ``w * (eps - eps_hat)^2`` (numpy or torch)."""
    lib = torch if isinstance(eps, torch.Tensor) else np
    w = loss_weights(masks, lesion_weight)[:, None]
    sel = present[:, :, None, None]
    sq = (eps - eps_hat) ** 2 * w * sel
    n = sel.sum() * eps.shape[-1] * eps.shape[-2]
    return sq.sum() / (n if lib is np else n.to(sq.dtype))


class Adam:
    """Adam with bias correction, operating in place on a parameter list."""

    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.b1**self.step_count
        c2 = 1.0 - self.b2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m.mul_(self.b1).add_(g, alpha=1.0 - self.b1)
            v.mul_(self.b2).addcmul_(g, g, value=1.0 - self.b2)
            p.addcdiv_(m / c1, (v / c2).sqrt_().add_(self.eps), value=-self.lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {"step": self.step_count, "m": [t.clone() for t in self.m], "v": [t.clone() for t in self.v]}


def training_step(model: TinyUNet, opt: Adam, batch: SliceBatch, true_eps, cfg: TrainConfig,
                  epoch: int = 0, batch_index: int = 0) -> float:
    """One weighted-loss gradient step; ``batch.images`` holds the noisy inputs."""
    true_eps = np.asarray(true_eps)
    if true_eps.shape != batch.images.shape:
        raise ShapeError(f"true noise shape {true_eps.shape} does not match images {batch.images.shape}")
    model.train()
    x = torch.as_tensor(np.array(batch.images, dtype=np.float32))
    m = torch.as_tensor(np.array(batch.masks, dtype=np.float32))
    t = torch.as_tensor(np.array(batch.timesteps))
    present = torch.as_tensor(np.array(batch.channel_present)).float()
    eps = torch.as_tensor(np.array(true_eps, dtype=np.float32))
    opt.zero_grad()
    loss = weighted_mse(eps, model(x, m, t), m, present, cfg.lesion_weight)
    value = float(loss.detach())
    if not np.isfinite(value):
        raise TrainingError(f"non-finite training loss {value}", epoch, batch_index)
    loss.backward()
    opt.step()
    return value


def build_model(channels: int, seed: int, **kwargs) -> TinyUNet:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return TinyUNet(channels=channels, **kwargs)


def make_noisy_batch(clean: SliceBatch, schedule: NoiseSchedule, rng: np.random.Generator,
                     dropout_prob: float) -> tuple[SliceBatch, np.ndarray]:
    b = len(clean)
    t = rng.integers(1, schedule.T + 1, size=b)
    eps = rng.standard_normal(clean.images.shape)
    # absent contrasts stay exactly zero
    eps = np.where(clean.channel_present[:, :, None, None], eps, 0.0)
    x_t = q_sample(clean.images, t, eps, schedule)
    noisy = replace(clean, images=x_t.astype(np.float32), timesteps=t)
    noisy = apply_contrast_dropout(noisy, dropout_prob, rng)
    eps = np.where(noisy.channel_present[:, :, None, None], eps, 0.0)
    return noisy, eps


def train(slices: list[SliceBatch], schedule: NoiseSchedule, cfg: TrainConfig,
          model: TinyUNet | None = None, progress=None) -> tuple[TinyUNet, list[float]]:
    """Train a noise predictor on clean slices; returns the model and per-epoch mean loss.

    Identical inputs and ``cfg.seed`` reproduce the same loss curve bit for bit.
    """
    if not slices:
        raise ParameterError("no training slices")
    channels = slices[0].images.shape[1]
    if model is None:
        model = build_model(channels, cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    by_shape: dict[tuple, list[int]] = {}
    for i, s in enumerate(slices):
        by_shape.setdefault(s.images.shape[1:], []).append(i)
    history = []
    for epoch in range(cfg.epochs):
        rng = rngmod.stream(cfg.seed, rngmod.TRAINING, epoch)
        batches = []
        for idx in by_shape.values():
            perm = rng.permutation(idx)
            batches += [perm[i:i + cfg.batch_size] for i in range(0, len(perm), cfg.batch_size)]
        order = rng.permutation(len(batches))
        losses = []
        for bi, j in enumerate(order):
            clean = SliceBatch.concat([slices[k] for k in batches[j]])
            noisy, eps = make_noisy_batch(clean, schedule, rng, cfg.dropout_prob)
            losses.append(training_step(model, opt, noisy, eps, cfg, epoch, bi))
        history.append(float(np.mean(losses)))
        log.info("epoch %d loss %.5f", epoch, history[-1])
        if progress is not None:
            progress(epoch, history[-1])
    model.eval()
    return model, history
