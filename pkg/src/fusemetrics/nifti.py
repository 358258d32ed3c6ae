"""Minimal NIfTI-1 reader/writer (single-file ``.nii`` and ``.nii.gz``).

Only the subset needed for segmentation volumes is supported: 3D data
(or 4D with a singleton fourth axis), datatypes uint8, int16, int32,
float32 and float64 on read, the first four on write.
"""

from __future__ import annotations

import gzip
import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volume import ImageGeometry, LabelSchema, LabelVolume, SchemaError, DEFAULT_SCHEMA

HEADER_SIZE = 348
NIFTI2_HEADER_SIZE = 540
GZIP_MAGIC = b"\x1f\x8b"
LABEL_ROUND_TOL = 1e-3

# NIfTI datatype code -> numpy dtype
DATATYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
WRITE_DATATYPES = {"uint8": 2, "int16": 4, "int32": 8, "float32": 16}


class NiftiError(ValueError):
    """Malformed or unsupported NIfTI file."""


class UnsupportedFormatError(NiftiError):
    pass


@dataclass(frozen=True)
class NiftiHeaderSubset:
    datatype: int
    dims: tuple[int, ...]
    pixdim: tuple[float, ...]
    qform_code: int
    sform_code: int
    quatern: tuple[float, float, float]
    qoffset: tuple[float, float, float]
    srow: tuple[tuple[float, float, float, float], ...]
    scl_slope: float
    scl_inter: float
    vox_offset: float
    byteorder: str


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC or path.suffix == ".gz":
        try:
            raw = gzip.decompress(raw)
        except OSError as exc:
            raise NiftiError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def parse_header(raw: bytes) -> NiftiHeaderSubset:
    if len(raw) < HEADER_SIZE:
        raise NiftiError("file shorter than a NIfTI-1 header")
    byteorder = None
    for bo in ("<", ">"):
        size = struct.unpack(bo + "i", raw[:4])[0]
        if size == NIFTI2_HEADER_SIZE:
            raise UnsupportedFormatError("NIfTI-2 files are not supported")
        if size == HEADER_SIZE:
            byteorder = bo
            break
    if byteorder is None:
        raise NiftiError("bad sizeof_hdr; not a NIfTI-1 file")
    magic = raw[344:348]
    if magic == b"n+2\x00":
        raise UnsupportedFormatError("NIfTI-2 files are not supported")
    if magic != b"n+1\x00":
        raise NiftiError(f"bad magic {magic!r}; only single-file NIfTI-1 (n+1) is supported")

    def unpack(fmt, offset):
        return struct.unpack_from(byteorder + fmt, raw, offset)

    dim = unpack("8h", 40)
    if not 1 <= dim[0] <= 7:
        raise NiftiError(f"dim[0]={dim[0]} out of range")
    datatype = unpack("h", 70)[0]
    pixdim = unpack("8f", 76)
    vox_offset = unpack("f", 108)[0]
    slope, inter = unpack("2f", 112)
    qform_code, sform_code = unpack("2h", 252)
    quatern = unpack("3f", 256)
    qoffset = unpack("3f", 268)
    srow = (unpack("4f", 280), unpack("4f", 296), unpack("4f", 312))
    return NiftiHeaderSubset(
        datatype=datatype,
        dims=tuple(dim[1 : dim[0] + 1]),
        pixdim=tuple(pixdim),
        qform_code=qform_code,
        sform_code=sform_code,
        quatern=tuple(quatern),
        qoffset=tuple(qoffset),
        srow=tuple(tuple(r) for r in srow),
        scl_slope=slope,
        scl_inter=inter,
        vox_offset=vox_offset,
        byteorder=byteorder,
    )


def _spatial_dims(hdr: NiftiHeaderSubset) -> tuple[int, int, int]:
    dims = hdr.dims
    if len(dims) == 3 or (len(dims) == 4 and dims[3] == 1):
        return tuple(int(d) for d in dims[:3])
    raise NiftiError(f"only 3D volumes are supported, got dims {dims}")


def _orthonormalize(m: np.ndarray) -> np.ndarray:
    # float32 header storage leaves ~1e-7 drift; snap to the nearest rotation
    if np.max(np.abs(m.T @ m - np.eye(3))) < 1e-9:
        return m
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def quaternion_to_direction(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    r = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ]
    )
    r[:, 2] *= -1.0 if qfac < 0 else 1.0
    return r


def geometry_from_header(hdr: NiftiHeaderSubset) -> ImageGeometry:
    """sform if sform_code > 0, else qform if qform_code > 0, else pixdim diagonal."""
    dims = _spatial_dims(hdr)
    if hdr.sform_code > 0:
        m = np.array([row[:3] for row in hdr.srow], dtype=float)
        origin = [row[3] for row in hdr.srow]
        spacing = np.linalg.norm(m, axis=0)
        if np.any(spacing <= 0):
            raise NiftiError("degenerate sform")
        direction = m / spacing[None, :]
        if np.max(np.abs(direction.T @ direction - np.eye(3))) > 1e-3:
            raise NiftiError("sheared sform is not supported")
        return ImageGeometry(dims, spacing, origin, _orthonormalize(direction))
    spacing = [abs(p) for p in hdr.pixdim[1:4]]
    if any(s <= 0 for s in spacing):
        raise NiftiError(f"non-positive pixdim {hdr.pixdim[1:4]}")
    if hdr.qform_code > 0:
        direction = quaternion_to_direction(*hdr.quatern, qfac=hdr.pixdim[0])
        return ImageGeometry(dims, spacing, hdr.qoffset, _orthonormalize(direction))
    return ImageGeometry(dims, spacing)


def read_nifti(path) -> tuple[NiftiHeaderSubset, ImageGeometry, np.ndarray]:
    """Read header, geometry and the unscaled stored array."""
    raw = _read_bytes(path)
    hdr = parse_header(raw)
    if hdr.datatype not in DATATYPES:
        raise UnsupportedFormatError(f"unsupported datatype code {hdr.datatype}")
    geometry = geometry_from_header(hdr)
    dtype = DATATYPES[hdr.datatype].newbyteorder(hdr.byteorder)
    offset = int(hdr.vox_offset)
    count = geometry.n_voxels
    if offset < HEADER_SIZE or len(raw) < offset + count * dtype.itemsize:
        raise NiftiError("truncated voxel data")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = flat.reshape(geometry.dims, order="F").astype(dtype.newbyteorder("="))
    return hdr, geometry, data


def read_volume(path) -> tuple[ImageGeometry, np.ndarray]:
    """Return geometry and float64 voxel values with scl_slope/scl_inter applied."""
    hdr, geometry, data = read_nifti(path)
    values = data.astype(np.float64)
    slope = hdr.scl_slope
    if slope != 0 and np.isfinite(slope):
        inter = hdr.scl_inter if np.isfinite(hdr.scl_inter) else 0.0
        values = values * slope + inter
    return geometry, values


def read_label_volume(path, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelVolume:
    geometry, values = read_volume(path)
    rounded = np.rint(values)
    off = np.abs(values - rounded)
    if off.size and off.max() > LABEL_ROUND_TOL:
        idx = np.unravel_index(int(np.argmax(off)), off.shape)
        raise SchemaError(f"{path}: non-integer label value {values[idx]} at voxel {tuple(int(i) for i in idx)}")
    if rounded.size and rounded.min() < 0:
        raise SchemaError(f"{path}: negative label value")
    labels = rounded.astype(np.int32)
    try:
        schema.validate(labels)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return LabelVolume(geometry, labels, schema)


def _check_representable(voxels: np.ndarray, dtype: np.dtype) -> None:
    values = np.asarray(voxels)
    if values.size == 0:
        return
    if dtype.kind in "iu":
        if values.dtype.kind == "f":
            if not np.all(np.isfinite(values)):
                raise OverflowError(f"non-finite values cannot be stored as {dtype}")
            if np.any(values != np.rint(values)):
                raise OverflowError(f"non-integer values cannot be stored as {dtype}")
        info = np.iinfo(dtype)
        lo, hi = values.min(), values.max()
        if lo < info.min or hi > info.max:
            raise OverflowError(f"values in [{lo}, {hi}] overflow {dtype}")
    else:
        finite = values[np.isfinite(values)] if values.dtype.kind == "f" else values
        if finite.size and np.abs(finite).max() > np.finfo(np.float32).max:
            raise OverflowError("values overflow float32")


def build_header(geometry: ImageGeometry, datatype: str) -> bytes:
    code = WRITE_DATATYPES[datatype]
    dtype = DATATYPES[code]
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *geometry.dims, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, code, dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *geometry.spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))
    struct.pack_into("<2f", hdr, 112, 0.0, 0.0)
    hdr[123] = 2 | 8  # mm, sec
    struct.pack_into("<2h", hdr, 252, 0, 1)
    aff = geometry.affine
    for row in range(3):
        struct.pack_into("<4f", hdr, 280 + 16 * row, *aff[row])
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr)


def write_volume(path, geometry: ImageGeometry, voxels, datatype: str = "float32") -> None:
    """Write a little-endian NIfTI-1 file; a ``.gz`` suffix enables gzip."""
    if datatype not in WRITE_DATATYPES:
        raise ValueError(f"unsupported write datatype {datatype!r}; choose from {sorted(WRITE_DATATYPES)}")
    values = np.asarray(voxels)
    if values.shape != geometry.dims:
        raise ValueError(f"voxel shape {values.shape} does not match dims {geometry.dims}")
    dtype = DATATYPES[WRITE_DATATYPES[datatype]]
    _check_representable(values, dtype)
    payload = io.BytesIO()
    payload.write(build_header(geometry, datatype))
    payload.write(b"\x00\x00\x00\x00")
    payload.write(values.astype(dtype.newbyteorder("<")).tobytes(order="F"))
    blob = payload.getvalue()
    path = Path(path)
    if path.suffix == ".gz":
        blob = gzip.compress(blob, mtime=0)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def write_label_volume(path, vol: LabelVolume) -> None:
    write_volume(path, vol.geometry, vol.voxels, "uint8" if vol.voxels.max(initial=0) <= 255 else "int16")
