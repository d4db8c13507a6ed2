"""Minimal single-file NIfTI-1 (.nii / .nii.gz) reader and writer.

Only 3D volumes are handled: ``float32`` (datatype 16) for images and
``uint8`` (datatype 2) for masks. Data are stored x-fastest, as the format
requires, and returned as ``(nx, ny, nz)`` arrays in canonical axial layout.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import NiftiFormatError, UnsupportedDatatypeError
from .volume import MaskVolume, Orientation, Volume, reorient

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

DT_UINT8 = 2
DT_FLOAT32 = 16
_DTYPES = {DT_UINT8: np.dtype("u1"), DT_FLOAT32: np.dtype("f4")}
_BITPIX = {DT_UINT8: 8, DT_FLOAT32: 32}


def _open(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def build_header(shape, spacing, datatype: int) -> bytes:
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *shape, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, _BITPIX[datatype])
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    hdr[123] = 2  # xyzt_units: mm
    struct.pack_into("<h", hdr, 254, 1)  # sform_code: scanner
    sx, sy, sz = spacing
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, 0.0)
    hdr[344:348] = MAGIC
    return bytes(hdr)


def write_nifti(path, vol: Volume | MaskVolume) -> Path:
    """Write ``vol`` (reoriented to axial first) as a single-file NIfTI-1."""
    path = Path(path)
    if vol.orientation != Orientation.AXIAL:
        vol = reorient(vol, Orientation.AXIAL)
    if isinstance(vol, MaskVolume):
        datatype, payload = DT_UINT8, vol.data.astype("<u1")
    else:
        datatype, payload = DT_FLOAT32, vol.data.astype("<f4")
    header = build_header(vol.shape, vol.spacing, datatype)
    with _open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
        fh.write(payload.tobytes(order="F"))
    return path


def _parse_header(raw: bytes):
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError("sizeof_hdr", f"file too short for a header ({len(raw)} bytes)")
    endian = "<"
    if struct.unpack_from("<i", raw, 0)[0] != HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
            endian = ">"
        else:
            got = struct.unpack_from("<i", raw, 0)[0]
            raise NiftiFormatError("sizeof_hdr", f"expected 348, got {got}")
    magic = raw[344:348]
    if magic != MAGIC:
        raise NiftiFormatError("magic", f"expected {MAGIC!r}, got {magic!r}")
    dim = struct.unpack_from(endian + "8h", raw, 40)
    if dim[0] != 3 and not (dim[0] == 4 and dim[4] == 1):
        raise NiftiFormatError("dim", f"expected a 3D volume, dim[0]={dim[0]}")
    shape = tuple(int(d) for d in dim[1:4])
    if min(shape) < 1:
        raise NiftiFormatError("dim", f"non-positive extent in {shape}")
    datatype = struct.unpack_from(endian + "h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise UnsupportedDatatypeError(f"unsupported NIfTI datatype code {datatype}")
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    vox_offset = struct.unpack_from(endian + "f", raw, 108)[0]
    if vox_offset < HEADER_SIZE or vox_offset != int(vox_offset):
        raise NiftiFormatError("vox_offset", f"invalid data offset {vox_offset}")
    slope, inter = struct.unpack_from(endian + "2f", raw, 112)
    spacing = tuple(float(abs(p)) if p else 1.0 for p in pixdim[1:4])
    return endian, shape, datatype, spacing, int(vox_offset), slope, inter


def read_nifti(path, as_mask: bool | None = None) -> Volume | MaskVolume:
    """Read a NIfTI-1 file.

    ``uint8`` files are returned as :class:`MaskVolume` (values must be 0/1)
    unless ``as_mask`` is False; ``float32`` files as :class:`Volume`.
    """
    path = Path(path)
    with _open(path, "rb") as fh:
        raw = fh.read()
    endian, shape, datatype, spacing, offset, slope, inter = _parse_header(raw)
    dtype = _DTYPES[datatype].newbyteorder(endian)
    n = int(np.prod(shape))
    if len(raw) < offset + n * dtype.itemsize:
        raise NiftiFormatError("dim", f"payload truncated: need {n} voxels at offset {offset}")
    data = np.frombuffer(raw, dtype=dtype, count=n, offset=offset).reshape(shape, order="F")
    data = data.astype(dtype.newbyteorder("="))
    scaled = slope not in (0.0, 1.0) or (slope == 1.0 and inter != 0.0)
    if as_mask is None:
        as_mask = datatype == DT_UINT8 and not scaled
    if as_mask:
        return MaskVolume(data.astype(np.uint8), spacing, Orientation.AXIAL)
    if scaled:
        data = (data.astype(np.float64) * slope + inter).astype(np.float32)
    return Volume(data.astype(np.float32, copy=False), spacing, Orientation.AXIAL)
