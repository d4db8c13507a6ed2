"""Synthetic multicontrast brain-like phantoms and lesion-filling metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import rng as rngmod
from .errors import GenerationError, ShapeError, UndefinedMetricError
from .volume import MaskVolume, MultiContrastVolume, Volume

BACKGROUND, CSF, GM, WM = 0, 1, 2, 3

CONTRASTS = ("T1w", "T2w", "FLAIR")

# (mean, std) per tissue label on a unit intensity scale
DEFAULT_PROFILES = {
    "T1w": {CSF: (0.20, 0.02), GM: (0.55, 0.02), WM: (0.80, 0.02)},
    "T2w": {CSF: (0.90, 0.02), GM: (0.60, 0.02), WM: (0.42, 0.02)},
    "FLAIR": {CSF: (0.12, 0.02), GM: (0.62, 0.02), WM: (0.48, 0.02)},
}

# lesion mean offset from white matter, in multiples of the white-matter std
DEFAULT_LESION_OFFSETS = {"T1w": -12.0, "T2w": 18.0, "FLAIR": 20.0}


@dataclass(frozen=True)
class PhantomConfig:
    shape: tuple[int, int, int] = (32, 32, 32)
    tissue_layout: str = "concentric"
    contrast_profiles: dict = field(default_factory=lambda: DEFAULT_PROFILES)
    lesion_offsets: dict = field(default_factory=lambda: DEFAULT_LESION_OFFSETS)
    lesion_count: int = 4
    lesion_radius_range: tuple[float, float] = (1.5, 3.0)
    gamma: float = 1.0
    seed: int = 0
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.gamma <= 0:
            raise GenerationError(f"gamma must be > 0, got {self.gamma}")
        if self.tissue_layout not in ("concentric", "blobs"):
            raise GenerationError(f"unknown tissue layout {self.tissue_layout!r}")
        r_lo, r_hi = self.lesion_radius_range
        if not 0 < r_lo <= r_hi:
            raise GenerationError(f"invalid lesion radius range {self.lesion_radius_range}")
        if 2 * r_hi + 1 > min(self.shape):
            raise GenerationError(f"lesion radius {r_hi} does not fit in shape {self.shape}")
        if self.lesion_count < 0:
            raise GenerationError("lesion_count must be >= 0")


class Phantom(NamedTuple):
    lesioned: MultiContrastVolume
    reference: MultiContrastVolume
    lesions: MaskVolume
    nawm: MaskVolume


def _grid(shape):
    return np.meshgrid(*(np.arange(n, dtype=np.float64) for n in shape), indexing="ij")


def tissue_labels(cfg: PhantomConfig) -> np.ndarray:
    """Integer tissue label map (0 background, 1 CSF, 2 GM, 3 WM)."""
    rng = rngmod.stream(cfg.seed, rngmod.PHANTOM, 0)
    shape = np.array(cfg.shape, dtype=np.float64)
    x, y, z = _grid(cfg.shape)
    center = (shape - 1) / 2 + rng.uniform(-0.5, 0.5, 3)
    semi = (shape / 2 - 1.5) * rng.uniform(0.88, 1.0, 3)
    dx, dy, dz = (x - center[0]) / semi[0], (y - center[1]) / semi[1], (z - center[2]) / semi[2]
    r = np.sqrt(dx**2 + dy**2 + dz**2)
    labels = np.zeros(cfg.shape, np.uint8)
    brain = r <= 1.0
    labels[brain] = WM
    if cfg.tissue_layout == "concentric":
        # folded cortex: inner cortical boundary modulated by angular ripples
        theta = np.arctan2(dy, dx)
        phi = np.arctan2(dz, np.hypot(dx, dy))
        k1, k2 = rng.integers(3, 7, 2)
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        inner = 0.82 + 0.06 * np.sin(k1 * theta + p1) * np.cos(k2 * phi + p2)
        labels[brain & (r > inner)] = GM
        # lateral ventricles: two ellipsoids either side of the midline
        vsemi = rng.uniform(0.16, 0.22), rng.uniform(0.28, 0.36), rng.uniform(0.14, 0.2)
        off = rng.uniform(0.14, 0.2)
        for sign in (-1.0, 1.0):
            rv = np.sqrt(((dx - sign * off) / vsemi[0]) ** 2 + (dy / vsemi[1]) ** 2 + (dz / vsemi[2]) ** 2)
            labels[rv <= 1.0] = CSF
    else:
        labels[brain & (r > 0.8)] = GM
        n_blobs = int(rng.integers(4, 8))
        for _ in range(n_blobs):
            c = rng.uniform(-0.5, 0.5, 3)
            rad = rng.uniform(0.1, 0.2)
            rb = np.sqrt((dx - c[0]) ** 2 + (dy - c[1]) ** 2 + (dz - c[2]) ** 2)
            labels[brain & (rb <= rad)] = CSF if rng.random() < 0.5 else GM
    return labels


def _place_lesions(cfg: PhantomConfig, labels: np.ndarray) -> np.ndarray:
    rng = rngmod.stream(cfg.seed, rngmod.PHANTOM, 1)
    mask = np.zeros(cfg.shape, bool)
    if cfg.lesion_count == 0:
        return mask
    x, y, z = _grid(cfg.shape)
    wm = labels == WM
    brain = labels != BACKGROUND
    # lesions sit in white matter, preferably bordering ventricles or cortex
    dist_wm = ndimage.distance_transform_edt(wm)
    centers = np.argwhere(wm & (dist_wm <= 3.0))
    if len(centers) == 0:
        centers = np.argwhere(wm)
    if len(centers) == 0:
        raise GenerationError("phantom has no white matter to host lesions")
    inner = ndimage.distance_transform_edt(brain)
    placed: list[tuple[np.ndarray, float]] = []
    attempts = 0
    while len(placed) < cfg.lesion_count:
        attempts += 1
        if attempts > 2000:
            raise GenerationError(
                f"could only place {len(placed)} of {cfg.lesion_count} non-overlapping lesions")
        c = centers[rng.integers(len(centers))].astype(np.float64)
        rad = rng.uniform(*cfg.lesion_radius_range)
        if inner[tuple(c.astype(int))] < rad + 1:
            continue
        if any(np.linalg.norm(c - c2) < rad + r2 + 1.5 for c2, r2 in placed):
            continue
        placed.append((c, rad))
        mask |= (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 <= rad**2
    return mask


def gamma_transform(v: Volume | np.ndarray, gamma: float, lo: float | None = None, hi: float | None = None):
    """Power law on intensities mapped to ``[0, 1]`` by ``(lo, hi)`` (volume min/max by default)."""
    data = np.asarray(getattr(v, "data", v), dtype=np.float64)
    lo = float(data.min()) if lo is None else lo
    hi = float(data.max()) if hi is None else hi
    if hi <= lo:
        out = data.copy()
    else:
        u = np.clip((data - lo) / (hi - lo), 0.0, 1.0)
        out = u**gamma * (hi - lo) + lo
    if isinstance(v, Volume):
        return v.with_data(out.astype(v.data.dtype))
    return out


def make_phantom(cfg: PhantomConfig) -> Phantom:
    """Lesioned and lesion-free multicontrast phantoms plus lesion and NAWM masks.

    Lesion intensities are raised to ``cfg.gamma`` (unit-mapped over the
    volume range) to vary lesion-to-NAWM contrast; everything outside the
    lesion mask is shared between the two images.
    """
    labels = tissue_labels(cfg)
    lesions = _place_lesions(cfg, labels)
    ref, les = {}, {}
    for ci, name in enumerate(cfg.contrast_profiles):
        prof = cfg.contrast_profiles[name]
        noise = rngmod.normal(cfg.shape, cfg.seed, rngmod.PHANTOM, 2, ci)
        img = np.zeros(cfg.shape)
        for label, (mean, std) in prof.items():
            sel = labels == label
            img[sel] = mean + std * noise[sel]
        img = np.clip(img, 0.0, None)
        wm_mean, wm_std = prof[WM]
        lmean = wm_mean + cfg.lesion_offsets.get(name, 0.0) * wm_std
        lnoise = rngmod.normal(cfg.shape, cfg.seed, rngmod.PHANTOM, 3, ci)
        lesioned = img.copy()
        lesioned[lesions] = np.clip(lmean + wm_std * lnoise[lesions], 0.0, None)
        if cfg.gamma != 1.0 and lesions.any():
            lo, hi = float(lesioned.min()), float(lesioned.max())
            lesioned[lesions] = gamma_transform(lesioned, cfg.gamma, lo, hi)[lesions]
        ref[name] = img.astype(np.float32)
        les[name] = lesioned.astype(np.float32)
    shell = ndimage.binary_dilation(lesions, ndimage.generate_binary_structure(3, 1), iterations=2)
    nawm = shell & ~lesions & (labels == WM)
    return Phantom(
        MultiContrastVolume.from_arrays(les, cfg.spacing),
        MultiContrastVolume.from_arrays(ref, cfg.spacing),
        MaskVolume(lesions.astype(np.uint8), cfg.spacing),
        MaskVolume(nawm.astype(np.uint8), cfg.spacing),
    )


def _arr(v):
    return np.asarray(getattr(v, "data", v), dtype=np.float64)


def rmse_in_mask(filled, reference, mask, nawm) -> float:
    """RMSE over ``mask`` voxels divided by the mean reference intensity over ``nawm``."""
    f, r = _arr(filled), _arr(reference)
    m, n = _arr(mask).astype(bool), _arr(nawm).astype(bool)
    if not (f.shape == r.shape == m.shape == n.shape):
        raise ShapeError("filled, reference and masks must share a shape")
    if not m.any():
        raise UndefinedMetricError("lesion mask is empty")
    if not n.any():
        raise UndefinedMetricError("NAWM mask is empty")
    rmse = np.sqrt(np.mean((f[m] - r[m]) ** 2))
    return float(rmse / r[n].mean())


def nawm_mean_fill(image, mask, nawm) -> np.ndarray:
    """Baseline filling: constant mean NAWM intensity inside the mask."""
    img = _arr(image)
    m, n = _arr(mask).astype(bool), _arr(nawm).astype(bool)
    out = img.copy()
    out[m] = img[n].mean()
    return out


def interslice_tv(v, axis: int, mask=None) -> float:
    """Mean |difference| between adjacent slices along ``axis``.

    With a mask, only neighbour pairs whose voxels both lie in the mask count;
    returns 0.0 when there are no such pairs.
    """
    a = _arr(v)
    d = np.abs(np.diff(a, axis=axis))
    if mask is None:
        return float(d.mean()) if d.size else 0.0
    m = _arr(mask).astype(bool)
    if m.shape != a.shape:
        raise ShapeError(f"mask shape {m.shape} does not match volume {a.shape}")
    n = a.shape[axis]
    pairs = np.take(m, range(n - 1), axis=axis) & np.take(m, range(1, n), axis=axis)
    return float(d[pairs].mean()) if pairs.any() else 0.0
