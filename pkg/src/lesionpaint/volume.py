"""Multicontrast volume containers, normalization, reorientation and labeling.

Volumes are stored as ``(nx, ny, nz)`` arrays. The ``orientation`` tag names
the view whose 2D planes are obtained by slicing along the *last* array axis:

* ``AXIAL``    -> array axes ``(x, y, z)`` (canonical storage order)
* ``CORONAL``  -> array axes ``(x, z, y)``
* ``SAGITTAL`` -> array axes ``(y, z, x)``

Reorientation is a pure axis permutation, so it is exact and invertible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeError


class Orientation(str, enum.Enum):
    AXIAL = "axial"
    CORONAL = "coronal"
    SAGITTAL = "sagittal"


# canonical axis order (x=0, y=1, z=2) held by each orientation's array axes
_AXES = {
    Orientation.AXIAL: (0, 1, 2),
    Orientation.CORONAL: (0, 2, 1),
    Orientation.SAGITTAL: (1, 2, 0),
}

VIEWS = (Orientation.AXIAL, Orientation.CORONAL, Orientation.SAGITTAL)


def view_permutation(current: Orientation, target: Orientation) -> tuple[int, int, int]:
    """Axis permutation taking an array in ``current`` layout to ``target`` layout."""
    cur = _AXES[Orientation(current)]
    tgt = _AXES[Orientation(target)]
    return tuple(cur.index(a) for a in tgt)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with voxel spacing (mm) and orientation tag."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    orientation: Orientation = Orientation.AXIAL

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"volume must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"volume shape components must be >= 1, got {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise ParameterError("volume intensities must be finite")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        return replace(self, data=data)


@dataclass(frozen=True)
class MaskVolume:
    """Binary mask aligned with a :class:`Volume`. Data is ``uint8`` in {0, 1}."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    orientation: Orientation = Orientation.AXIAL

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"mask must be 3D, got shape {data.shape}")
        if data.dtype == bool:
            data = data.astype(np.uint8)
        if not np.all((data == 0) | (data == 1)):
            raise ParameterError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", _freeze(data.astype(np.uint8)))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def as_bool(self) -> np.ndarray:
        return self.data.astype(bool)

    @classmethod
    def zeros_like(cls, other: "Volume | MaskVolume") -> "MaskVolume":
        return cls(np.zeros(other.shape, np.uint8), other.spacing, other.orientation)


@dataclass(frozen=True)
class MultiContrastVolume:
    """Ordered named contrasts sharing one grid.

    ``normalization`` holds the per-contrast ``(low, high)`` raw-intensity
    bounds when the data are in normalized ``[-1, 1]`` units, else ``None``.
    Absent contrasts are carried as all-zero volumes with ``presence`` False.
    """

    names: tuple[str, ...]
    volumes: tuple[Volume, ...]
    presence: tuple[bool, ...] | None = None
    normalization: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        names = tuple(self.names)
        vols = tuple(self.volumes)
        if len(names) != len(vols) or not vols:
            raise ShapeError("names and volumes must be non-empty and of equal length")
        presence = tuple(bool(p) for p in self.presence) if self.presence is not None else (True,) * len(vols)
        if len(presence) != len(vols):
            raise ShapeError("presence flags must match contrast count")
        ref = vols[0]
        for name, v in zip(names, vols):
            if v.shape != ref.shape or v.orientation != ref.orientation or v.spacing != ref.spacing:
                raise ShapeError(f"contrast {name!r} is not aligned with {names[0]!r}")
        for name, v, p in zip(names, vols, presence):
            if not p and np.any(v.data != 0):
                raise ParameterError(f"absent contrast {name!r} must be all zeros")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "volumes", vols)
        object.__setattr__(self, "presence", presence)
        if self.normalization is not None:
            norm = tuple((float(lo), float(hi)) for lo, hi in self.normalization)
            object.__setattr__(self, "normalization", norm)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray | None], spacing=(1.0, 1.0, 1.0),
                    orientation=Orientation.AXIAL) -> "MultiContrastVolume":
        """Build from a ``{name: array or None}`` dict; ``None`` marks a missing contrast."""
        shape = next(np.shape(a) for a in arrays.values() if a is not None)
        vols, presence = [], []
        for a in arrays.values():
            present = a is not None
            vols.append(Volume(np.asarray(a, np.float32) if present else np.zeros(shape, np.float32),
                               spacing, orientation))
            presence.append(present)
        return cls(tuple(arrays), tuple(vols), tuple(presence))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.volumes[0].shape

    @property
    def spacing(self):
        return self.volumes[0].spacing

    @property
    def orientation(self) -> Orientation:
        return self.volumes[0].orientation

    def stack(self) -> np.ndarray:
        """``(C, nx, ny, nz)`` float64 array of all contrasts."""
        return np.stack([v.data for v in self.volumes]).astype(np.float64)

    def with_stack(self, stack: np.ndarray) -> "MultiContrastVolume":
        vols = tuple(v.with_data(np.asarray(s, np.float32) if p else np.zeros(v.shape, np.float32))
                     for v, s, p in zip(self.volumes, stack, self.presence))
        return replace(self, volumes=vols)

    def normalized(self, p_low: float = 1.0, p_high: float = 99.0) -> "MultiContrastVolume":
        if self.normalization is not None:
            return self
        vols, bounds = [], []
        for v, p in zip(self.volumes, self.presence):
            if p:
                nv, b = normalize(v, p_low, p_high)
            else:
                nv, b = v, (0.0, 0.0)
            vols.append(nv)
            bounds.append(b)
        return replace(self, volumes=tuple(vols), normalization=tuple(bounds))

    def denormalized(self) -> "MultiContrastVolume":
        if self.normalization is None:
            return self
        vols = tuple(denormalize(v, b) if p else v
                     for v, b, p in zip(self.volumes, self.normalization, self.presence))
        return replace(self, volumes=vols, normalization=None)

    def reoriented(self, target: Orientation) -> "MultiContrastVolume":
        return replace(self, volumes=tuple(reorient(v, target) for v in self.volumes))


def normalize(v: Volume, p_low: float = 1.0, p_high: float = 99.0) -> tuple[Volume, tuple[float, float]]:
    """Clamp to the ``[p_low, p_high]`` percentiles and map affinely to ``[-1, 1]``.

    A constant volume maps to all zeros with bounds ``(c, c)``.
    """
    if not p_low < p_high:
        raise ParameterError(f"p_low ({p_low}) must be < p_high ({p_high})")
    data = v.data.astype(np.float64)
    lo, hi = np.percentile(data, [p_low, p_high])
    lo, hi = float(lo), float(hi)
    if hi <= lo:
        c = float(data.flat[0]) if np.all(data == data.flat[0]) else lo
        return v.with_data(np.zeros(v.shape, np.float32)), (c, c)
    out = (np.clip(data, lo, hi) - lo) / (hi - lo) * 2.0 - 1.0
    return v.with_data(out.astype(np.float32)), (lo, hi)


def denormalize(v: Volume, bounds: tuple[float, float]) -> Volume:
    """Inverse of :func:`normalize` on the clamped range."""
    lo, hi = bounds
    data = v.data.astype(np.float64)
    if hi <= lo:
        return v.with_data(np.full(v.shape, lo, np.float32))
    return v.with_data(((data + 1.0) / 2.0 * (hi - lo) + lo).astype(np.float32))


def reorient(v, target: Orientation):
    """Permute axes of a :class:`Volume` or :class:`MaskVolume` into ``target`` view."""
    target = Orientation(target)
    perm = view_permutation(v.orientation, target)
    spacing = tuple(v.spacing[i] for i in perm)
    return type(v)(np.transpose(v.data, perm), spacing, target)


_STRUCTURES = {6: 1, 18: 2, 26: 3}


def connected_components(m: MaskVolume | np.ndarray, connectivity: int = 26) -> list[np.ndarray]:
    """Label foreground components of a 3D mask.

    Returns one ``(n, 3)`` integer coordinate array per component, each sorted
    by linear (C-order) index, with components ordered by their minimum linear
    index.
    """
    if connectivity not in _STRUCTURES:
        raise ParameterError(f"connectivity must be one of 6, 18, 26; got {connectivity}")
    data = m.data if isinstance(m, MaskVolume) else np.asarray(m)
    fg = data.astype(bool)
    if not fg.any():
        return []
    structure = ndimage.generate_binary_structure(3, _STRUCTURES[connectivity])
    labels, n = ndimage.label(fg, structure=structure)
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    splits = np.flatnonzero(np.diff(lab)) + 1
    groups = np.split(idx, splits)
    groups.sort(key=lambda g: int(g[0]))
    return [np.stack(np.unravel_index(g, fg.shape), axis=1) for g in groups]


def components_to_mask(components: Sequence[np.ndarray], shape) -> np.ndarray:
    out = np.zeros(shape, np.uint8)
    for c in components:
        if len(c):
            out[tuple(np.asarray(c).T)] = 1
    return out
