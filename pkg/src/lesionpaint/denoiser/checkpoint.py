"""Versioned binary weight checkpoints.

Layout (little-endian)::

    magic   b"LPCKPT\\0\\0"          8 bytes
    version u16
    meta    u32 length + UTF-8 JSON (architecture + schedule parameters)
    count   u32
    records count x { u16 name length, name, u8 ndim, u32[ndim] shape, f32 payload }
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from ..schedule import build_cosine_schedule
from .network import NetworkDenoiser, TinyUNet

MAGIC = b"LPCKPT\x00\x00"
VERSION = 1


def save_checkpoint(path, model: TinyUNet, meta: dict | None = None) -> Path:
    path = Path(path)
    header = dict(meta or {})
    header["architecture"] = model.config()
    blob = json.dumps(header, sort_keys=True).encode()
    state = model.state_dict()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            key = name.encode()
            fh.write(struct.pack("<H", len(key)))
            fh.write(key)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))
    return path


def _take(buf: memoryview, pos: int, n: int, what: str):
    if pos + n > len(buf):
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf[pos:pos + n], pos + n


def load_checkpoint(path) -> tuple[TinyUNet, dict]:
    raw = memoryview(Path(path).read_bytes())
    chunk, pos = _take(raw, 0, 8, "magic")
    if bytes(chunk) != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {bytes(chunk)!r}")
    chunk, pos = _take(raw, pos, 2, "version")
    (version,) = struct.unpack("<H", chunk)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    chunk, pos = _take(raw, pos, 4, "meta length")
    (n,) = struct.unpack("<I", chunk)
    chunk, pos = _take(raw, pos, n, "meta")
    meta = json.loads(bytes(chunk))
    chunk, pos = _take(raw, pos, 4, "record count")
    (count,) = struct.unpack("<I", chunk)
    state = {}
    for _ in range(count):
        chunk, pos = _take(raw, pos, 2, "name length")
        (n,) = struct.unpack("<H", chunk)
        chunk, pos = _take(raw, pos, n, "name")
        name = bytes(chunk).decode()
        chunk, pos = _take(raw, pos, 1, f"{name} ndim")
        (ndim,) = struct.unpack("<B", chunk)
        chunk, pos = _take(raw, pos, 4 * ndim, f"{name} shape")
        shape = struct.unpack(f"<{ndim}I", chunk)
        size = int(np.prod(shape)) * 4
        chunk, pos = _take(raw, pos, size, f"{name} payload")
        state[name] = torch.from_numpy(np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float32))
    model = TinyUNet(**meta["architecture"])
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint does not match architecture: {exc}") from exc
    return model.eval(), meta


def load_denoiser(path) -> NetworkDenoiser:
    model, meta = load_checkpoint(path)
    sched = build_cosine_schedule(int(meta.get("T", 1000)), float(meta.get("s", 0.008)))
    return NetworkDenoiser(model, sched)
