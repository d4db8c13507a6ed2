"""Lesion dictionaries, composite candidate-mask sampling and synthetic dataset generation."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .errors import IngestionError, LesionPaintError, ParameterError, SamplingError
from .volume import MaskVolume, components_to_mask, connected_components

log = logging.getLogger(__name__)

RLE_MAGIC = b"LDRLE\x00"
RLE_VERSION = 1
META_NAME = "dictionary.json"


@dataclass(frozen=True)
class LesionDictionary:
    """Connected lesion components from many sessions in one anatomical space.

    Each session is a list of components; a component is an ``(n, 3)`` array
    of voxel coordinates.
    """

    space_id: str
    shape: tuple[int, int, int]
    sessions: tuple[tuple[np.ndarray, ...], ...]
    session_names: tuple[str, ...] = ()

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        sessions = tuple(tuple(np.asarray(c, dtype=np.int64).reshape(-1, 3) for c in s) for s in self.sessions)
        for si, comps in enumerate(sessions):
            for c in comps:
                if len(c) and (c.min() < 0 or np.any(c.max(axis=0) >= shape)):
                    raise IngestionError(f"session {si}: component voxel outside grid {shape}")
            seen = np.zeros(shape, bool)
            for c in comps:
                idx = tuple(c.T)
                if seen[idx].any():
                    raise IngestionError(f"session {si}: components overlap")
                seen[idx] = True
        object.__setattr__(self, "sessions", sessions)
        names = tuple(self.session_names) or tuple(f"session_{i:05d}" for i in range(len(sessions)))
        object.__setattr__(self, "session_names", names)

    @property
    def n_components(self) -> int:
        return sum(len(s) for s in self.sessions)


def build_dictionary(masks: Sequence[MaskVolume], space_id: str, connectivity: int = 26,
                     names: Sequence[str] | None = None) -> LesionDictionary:
    """Decompose each pre-aligned mask into connected components, one session per mask."""
    names = list(names) if names is not None else [f"session_{i:05d}" for i in range(len(masks))]
    if not masks:
        return LesionDictionary(space_id, (1, 1, 1), (), ())
    shape = masks[0].shape
    for name, m in zip(names, masks):
        if m.shape != shape:
            raise IngestionError(f"{name}: mask shape {m.shape} differs from dictionary shape {shape}")
    sessions = tuple(tuple(connected_components(m, connectivity)) for m in masks)
    return LesionDictionary(space_id, shape, sessions, tuple(names))


def sample_candidate_mask(dictionary: LesionDictionary, n_sessions: int = 8, fraction: float = 1 / 8,
                          rng: np.random.Generator | None = None, mode: str = "pooled",
                          return_info: bool = False):
    """Compose a candidate lesion mask from randomly chosen sessions and components.

    ``pooled`` picks ``round(fraction * pool)`` components (at least one when
    the pool is nonempty) from the union of the chosen sessions' components;
    ``per-session`` applies the same rule inside each chosen session.
    """
    if not dictionary.sessions:
        raise SamplingError("dictionary has no sessions")
    if not 1 <= n_sessions <= len(dictionary.sessions):
        raise SamplingError(f"n_sessions={n_sessions} not in [1, {len(dictionary.sessions)}]")
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    if mode not in ("pooled", "per-session"):
        raise ParameterError(f"unknown pooling mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng()
    chosen = rng.choice(len(dictionary.sessions), size=n_sessions, replace=False)
    groups = [[c for s in chosen for c in dictionary.sessions[s]]] if mode == "pooled" \
        else [list(dictionary.sessions[s]) for s in chosen]
    selected = []
    for pool in groups:
        if not pool:
            continue
        k = max(1, int(round(fraction * len(pool))))
        pick = rng.choice(len(pool), size=k, replace=False)
        selected += [pool[i] for i in sorted(pick)]
    mask = MaskVolume(components_to_mask(selected, dictionary.shape))
    if return_info:
        return mask, {"sessions": [int(s) for s in chosen], "n_components": len(selected),
                      "pool_size": sum(len(g) for g in groups)}
    return mask


def _encode_runs(lin: np.ndarray) -> np.ndarray:
    lin = np.sort(np.asarray(lin, dtype=np.int64))
    if not len(lin):
        return np.zeros((0, 2), np.int64)
    breaks = np.flatnonzero(np.diff(lin) != 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(lin)]])
    return np.stack([lin[starts], ends - starts], axis=1)


def write_session(path, components: Sequence[np.ndarray], shape) -> None:
    """Run-length-encoded component file: header, then per component its runs of linear indices."""
    with open(path, "wb") as fh:
        fh.write(RLE_MAGIC)
        fh.write(struct.pack("<H3II", RLE_VERSION, *shape, len(components)))
        for c in components:
            lin = np.ravel_multi_index(tuple(np.asarray(c).T), shape) if len(c) else np.zeros(0, np.int64)
            runs = _encode_runs(lin)
            fh.write(struct.pack("<I", len(runs)))
            fh.write(runs.astype("<u8").tobytes())


def read_session(path) -> tuple[tuple[int, int, int], list[np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:len(RLE_MAGIC)] != RLE_MAGIC:
        raise IngestionError(f"{path}: bad session file magic")
    pos = len(RLE_MAGIC)
    version, nx, ny, nz, count = struct.unpack_from("<H3II", raw, pos)
    if version != RLE_VERSION:
        raise IngestionError(f"{path}: unsupported session file version {version}")
    pos += struct.calcsize("<H3II")
    shape = (nx, ny, nz)
    comps = []
    for _ in range(count):
        (n_runs,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        runs = np.frombuffer(raw, dtype="<u8", count=2 * n_runs, offset=pos).reshape(-1, 2).astype(np.int64)
        pos += 16 * n_runs
        lin = np.concatenate([np.arange(s, s + n) for s, n in runs]) if n_runs else np.zeros(0, np.int64)
        comps.append(np.stack(np.unravel_index(lin, shape), axis=1))
    return shape, comps


def save_dictionary(d: LesionDictionary, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for name, comps in zip(d.session_names, d.sessions):
        fname = f"{name}.rle"
        write_session(directory / fname, comps, d.shape)
        files.append(fname)
    meta = {"format_version": RLE_VERSION, "space_id": d.space_id, "shape": list(d.shape),
            "sessions": files, "n_components": d.n_components}
    (directory / META_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def load_dictionary(directory) -> LesionDictionary:
    directory = Path(directory)
    meta = json.loads((directory / META_NAME).read_text())
    shape = tuple(meta["shape"])
    sessions, names = [], []
    for fname in meta["sessions"]:
        s_shape, comps = read_session(directory / fname)
        if s_shape != shape:
            raise IngestionError(f"{fname}: shape {s_shape} differs from dictionary shape {shape}")
        sessions.append(tuple(comps))
        names.append(Path(fname).stem)
    return LesionDictionary(meta["space_id"], shape, tuple(sessions), tuple(names))


def generate_dataset(dictionary: LesionDictionary, base, n_images: int, out_dir, *,
                     synthesize: Callable, seed: int = 0, n_sessions: int = 8, fraction: float = 1 / 8,
                     mode: str = "pooled", write_volume: Callable | None = None,
                     write_mask: Callable | None = None) -> list[dict]:
    """Sample candidate masks and synthesize lesions into ``base`` for each image.

    ``synthesize(base, mask, image_seed)`` returns the synthesized
    multicontrast volume. One JSON line per image is written to
    ``manifest.jsonl``; failures become ``status: failed`` rows and the run
    continues. Each image's randomness is keyed by ``(seed, image index)``.
    """
    from .nifti import write_nifti

    write_volume = write_volume or write_nifti
    write_mask = write_mask or write_nifti
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if base.shape != dictionary.shape:
        raise ParameterError(f"base shape {base.shape} is not the dictionary shape {dictionary.shape}")
    rows = []
    for i in range(n_images):
        image_seed = int(rngmod.stream(seed, rngmod.DATASET_ITEM, i).integers(0, 2**31 - 1))
        row = {"index": i, "seed": image_seed, "space_id": dictionary.space_id}
        try:
            mask, info = sample_candidate_mask(dictionary, n_sessions, fraction,
                                               rngmod.stream(seed, rngmod.MASK_SAMPLING, i), mode,
                                               return_info=True)
            row.update(n_components=info["n_components"], lesion_voxels=mask.count,
                       sessions=info["sessions"])
            synth = synthesize(base, mask, image_seed)
            paths = {}
            for name, vol in zip(synth.names, synth.volumes):
                p = out_dir / f"img_{i:05d}_{name}.nii"
                write_volume(p, vol)
                paths[name] = p.name
            mpath = out_dir / f"img_{i:05d}_mask.nii"
            write_mask(mpath, mask)
            row.update(status="ok", images=paths, mask=mpath.name)
        except LesionPaintError as exc:
            log.warning("image %d failed: %s", i, exc)
            row.update(status="failed", error=str(exc))
        rows.append(row)
    with open(out_dir / "manifest.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return rows
