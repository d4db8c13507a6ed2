"""Three-view inference: full axial pass, truncated coronal/sagittal refinements, median fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .denoiser.batch import Denoiser
from .errors import LesionPaintError, NumericalError, ShapeError, ViewError
from .sampler import RepaintMasks, SamplerConfig, repaint_ddim_sample, truncated_inversion
from .volume import MultiContrastVolume, Orientation, Volume, view_permutation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViewResult:
    view: Orientation
    volume: MultiContrastVolume


def median_fuse(a: Volume, b: Volume, c: Volume) -> Volume:
    """Per-voxel median of three aligned volumes."""
    if not (a.shape == b.shape == c.shape):
        raise ShapeError(f"cannot fuse shapes {a.shape}, {b.shape}, {c.shape}")
    x, y, z = (np.asarray(v.data, dtype=np.float64) for v in (a, b, c))
    # median of three without sorting: max(min(x, y), min(max(x, y), z))
    med = np.maximum(np.minimum(x, y), np.minimum(np.maximum(x, y), z))
    return a.with_data(med.astype(np.result_type(a.data, b.data, c.data)))


def volume_to_slices(stack: np.ndarray) -> np.ndarray:
    """``(C, a, b, n)`` -> ``(n, C, a, b)``: one item per plane along the last axis."""
    return np.moveaxis(stack, -1, 0)


def slices_to_volume(slices: np.ndarray) -> np.ndarray:
    return np.moveaxis(slices, 0, -1)


def _view_inputs(stack_axial: np.ndarray, masks: RepaintMasks, view: Orientation):
    perm = view_permutation(Orientation.AXIAL, view)
    stack = np.transpose(stack_axial, (0,) + tuple(p + 1 for p in perm))
    target = np.moveaxis(np.transpose(masks.target_array, perm), -1, 0)
    repaint = np.moveaxis(np.transpose(masks.repaint_array, perm), -1, 0)
    return volume_to_slices(stack), RepaintMasks(target, repaint), perm


def _back_to_axial(slices: np.ndarray, perm) -> np.ndarray:
    inv = np.argsort(perm)
    return np.transpose(slices_to_volume(slices), (0,) + tuple(int(p) + 1 for p in inv))


def run_multiview(volume: MultiContrastVolume, masks: RepaintMasks, cfg: SamplerConfig, denoiser: Denoiser,
                  *, views: str = "all", return_views: bool = False):
    """Repaint a normalized multicontrast volume with multi-view consistency.

    Step 1 samples every axial slice from noise. Steps 2 and 3 each reorient
    the axial result, re-noise it to ``cfg.truncation_tau`` and run the
    truncated sampler in the coronal and sagittal planes. Step 4 takes the
    voxelwise median of the three. With ``views="axial"`` or no truncation
    tau only the axial result is returned.

    ``masks`` must hold canonical (axial layout) arrays or mask volumes.
    """
    if volume.orientation != Orientation.AXIAL:
        volume = volume.reoriented(Orientation.AXIAL)
    if masks.target_array.shape != volume.shape:
        raise ShapeError(f"masks {masks.target_array.shape} are not aligned with volume {volume.shape}")
    stack = volume.stack()
    present = np.array(volume.presence)
    results = {}

    def run_view(view: Orientation, start: np.ndarray, truncated: bool) -> np.ndarray:
        slices, vmasks, perm = _view_inputs(start, masks, view)
        kwargs = dict(channel_present=present, slice_ids=np.arange(len(slices)), stream=rngmod.tag(view.value))
        try:
            if truncated:
                out = truncated_inversion(slices, cfg.truncation_tau, vmasks, cfg, denoiser, **kwargs)
            else:
                out = repaint_ddim_sample(slices, vmasks, cfg, denoiser, **kwargs)
        except NumericalError as exc:
            raise NumericalError(str(exc), exc.timestep, f"view={view.value}") from exc
        except LesionPaintError as exc:
            raise ViewError(f"{view.value} pass failed: {exc}") from exc
        return _back_to_axial(out, perm)

    log.info("axial pass: %d slices", stack.shape[-1])
    x_axial = run_view(Orientation.AXIAL, stack, truncated=False)
    results[Orientation.AXIAL] = x_axial
    if views == "axial" or cfg.truncation_tau is None:
        fused = x_axial
    else:
        for view in (Orientation.CORONAL, Orientation.SAGITTAL):
            log.info("%s pass from tau=%d", view.value, cfg.truncation_tau)
            results[view] = run_view(view, x_axial, truncated=True)
        a, c, s = (results[v] for v in (Orientation.AXIAL, Orientation.CORONAL, Orientation.SAGITTAL))
        fused = np.maximum(np.minimum(a, c), np.minimum(np.maximum(a, c), s))

    out = volume.with_stack(fused)
    if not return_views:
        return out
    return out, {v: ViewResult(v, volume.with_stack(r)) for v, r in results.items()}
