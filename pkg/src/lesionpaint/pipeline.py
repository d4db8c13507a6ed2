"""Raw-intensity entry points: normalize, repaint in three views, map back, copy untouched voxels."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .denoiser.batch import Denoiser
from .multiview import run_multiview
from .sampler import RepaintMasks, SamplerConfig
from .volume import MultiContrastVolume, Orientation


def inpaint(raw: MultiContrastVolume, masks: RepaintMasks, cfg: SamplerConfig, denoiser: Denoiser,
            views: str = "all", p_low: float = 1.0, p_high: float = 99.0) -> MultiContrastVolume:
    """Repaint a raw-intensity volume and return raw intensities.

    Voxels outside the repaint mask are bit-exact copies of ``raw``; inside,
    the sampled values are mapped back through each contrast's normalization.
    """
    raw = raw.denormalized().reoriented(Orientation.AXIAL)
    norm = raw.normalized(p_low, p_high)
    out = run_multiview(norm, masks, cfg, denoiser, views=views).denormalized()
    keep = ~masks.repaint_array.astype(bool)
    vols = tuple(o.with_data(np.where(keep, r.data, o.data)) for o, r in zip(out.volumes, raw.volumes))
    return replace(raw, volumes=vols)
