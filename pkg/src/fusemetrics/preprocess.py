"""Image preparation: RAS reorientation, isotropic resampling, brain-box
cropping, fixed field-of-view crop/pad and z-score normalization.

Intensity images use trilinear interpolation, label volumes nearest
neighbour. Skull stripping is assumed to be done upstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .volume import BinaryMask, GeometryMismatchError, ImageGeometry, check_same_grid

DEFAULT_SPACING = (1.0, 1.0, 1.0)
DEFAULT_FOV = (192, 224, 160)
AXIS_TOL = 1e-3
STD_EPS = 1e-8
MODES = ("linear", "nearest")


class ObliqueOrientationError(ValueError):
    pass


class ConstantImageError(ValueError):
    pass


@dataclass
class PreprocessPlan:
    spacing: tuple[float, float, float] = DEFAULT_SPACING
    fov: tuple[int, int, int] = DEFAULT_FOV
    reorient: bool = True
    resample: bool = True
    crop: bool = True
    resize: bool = True
    normalize: bool = True
    permutation: tuple[int, int, int] | None = None
    flips: tuple[bool, bool, bool] | None = None
    crop_box: tuple[tuple[int, int], ...] | None = None  # inclusive bounds

    def __post_init__(self):
        if any(s <= 0 for s in self.spacing):
            raise ValueError("target spacing must be positive")
        if any(int(f) < 1 for f in self.fov):
            raise ValueError("FOV dims must be >= 1")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.fov = tuple(int(f) for f in self.fov)

    def to_dict(self) -> dict:
        return {
            "spacing": list(self.spacing),
            "fov": list(self.fov),
            "steps": {k: getattr(self, k) for k in ("reorient", "resample", "crop", "resize", "normalize")},
            "permutation": list(self.permutation) if self.permutation else None,
            "flips": list(self.flips) if self.flips else None,
            "crop_box": [list(b) for b in self.crop_box] if self.crop_box else None,
        }


def canonical_axes(direction: np.ndarray) -> tuple[tuple[int, int, int], tuple[bool, bool, bool]]:
    """For each world axis, the voxel axis pointing along it and whether it points backwards."""
    direction = np.asarray(direction, dtype=float)
    perm = [-1, -1, -1]
    flips = [False, False, False]
    for vox_axis in range(3):
        col = direction[:, vox_axis]
        world_axis = int(np.argmax(np.abs(col)))
        target = np.zeros(3)
        target[world_axis] = np.sign(col[world_axis])
        if np.max(np.abs(col - target)) > AXIS_TOL or perm[world_axis] != -1:
            raise ObliqueOrientationError(f"direction column {col} is not axis-aligned")
        perm[world_axis] = vox_axis
        flips[world_axis] = bool(col[world_axis] < 0)
    return tuple(perm), tuple(flips)


def reorient_to_canonical(geometry: ImageGeometry, voxels: np.ndarray):
    """Permute/flip voxel axes so the direction matrix becomes identity (RAS)."""
    voxels = np.asarray(voxels)
    perm, flips = canonical_axes(geometry.direction_matrix)
    if perm == (0, 1, 2) and not any(flips):
        return geometry, voxels
    data = np.transpose(voxels, perm)
    dims = tuple(geometry.dims[p] for p in perm)
    spacing = tuple(geometry.spacing[p] for p in perm)
    # new voxel 0 on a flipped axis is old voxel n-1 along that axis
    corner = [0, 0, 0]
    for world_axis, vox_axis in enumerate(perm):
        if flips[world_axis]:
            corner[vox_axis] = geometry.dims[vox_axis] - 1
            data = np.flip(data, axis=world_axis)
    origin = geometry.index_to_world(corner)
    new_geom = ImageGeometry(dims, spacing, origin, np.eye(3))
    return new_geom, np.ascontiguousarray(data)


def _check_mode(voxels: np.ndarray, mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "linear" and voxels.dtype.kind in "biu":
        raise ValueError("label volumes must be resampled with mode='nearest'")


def resample_isotropic(geometry: ImageGeometry, voxels, spacing=DEFAULT_SPACING, mode: str = "linear"):
    """Resample onto a grid with the target spacing covering the same physical extent.

    Output dims are ``ceil(n * s / t)``; samples falling outside the source
    voxel extent are 0.
    """
    spacing = tuple(float(s) for s in (spacing if np.ndim(spacing) else (spacing,) * 3))
    if any(s <= 0 for s in spacing):
        raise ValueError("target spacing must be positive")
    voxels = np.asarray(voxels)
    _check_mode(voxels, mode)
    if np.allclose(spacing, geometry.spacing, rtol=0, atol=1e-9):
        return geometry, voxels
    src_sp = np.asarray(geometry.spacing)
    tgt_sp = np.asarray(spacing)
    dims = tuple(int(math.ceil(n * s / t - 1e-9)) for n, s, t in zip(geometry.dims, src_sp, tgt_sp))
    # output voxel k center in source index coordinates
    axes = [(np.arange(m) + 0.5) * t / s - 0.5 for m, s, t in zip(dims, src_sp, tgt_sp)]
    inside = [(a >= -0.5) & (a <= n - 0.5) for a, n in zip(axes, geometry.dims)]
    if mode == "nearest":
        idx = [np.clip(np.floor(a + 0.5).astype(np.intp), 0, n - 1) for a, n in zip(axes, geometry.dims)]
        out = voxels[np.ix_(*idx)]
    else:
        coords = [np.clip(a, 0, n - 1) for a, n in zip(axes, geometry.dims)]
        grid = np.meshgrid(*coords, indexing="ij")
        out = ndimage.map_coordinates(voxels.astype(np.float64), grid, order=1, mode="nearest")
    keep = inside[0][:, None, None] & inside[1][None, :, None] & inside[2][None, None, :]
    out = np.where(keep, out, 0).astype(voxels.dtype if mode == "nearest" else np.float64)
    shift = (tgt_sp - src_sp) / 2.0
    origin = np.asarray(geometry.origin) + geometry.direction_matrix @ shift
    return ImageGeometry(dims, spacing, origin, geometry.direction), out


def crop_to_brain(images: Sequence[tuple[ImageGeometry, np.ndarray]]) -> tuple[tuple[int, int], ...]:
    """Tightest inclusive box holding every voxel nonzero in any image."""
    if not images:
        raise ValueError("no images given")
    check_same_grid(*(g for g, _ in images))
    dims = images[0][0].dims
    any_nonzero = np.zeros(dims, dtype=bool)
    for _, vox in images:
        any_nonzero |= np.asarray(vox) != 0
    if not any_nonzero.any():
        return tuple((0, d - 1) for d in dims)
    box = []
    for axis in range(3):
        other = tuple(i for i in range(3) if i != axis)
        idx = np.flatnonzero(any_nonzero.any(axis=other))
        box.append((int(idx[0]), int(idx[-1])))
    return tuple(box)


def apply_crop(geometry: ImageGeometry, voxels, box):
    lo = [b[0] for b in box]
    for (a, b), n in zip(box, geometry.dims):
        if not 0 <= a <= b < n:
            raise ValueError(f"crop box {box} outside dims {geometry.dims}")
    sl = tuple(slice(a, b + 1) for a, b in box)
    data = np.asarray(voxels)[sl]
    geom = ImageGeometry(data.shape, geometry.spacing, geometry.index_to_world(lo), geometry.direction)
    return geom, data


def resize_fov(geometry: ImageGeometry, voxels, fov=DEFAULT_FOV, mode: str = "linear"):
    """Center-crop or zero-pad each axis to ``fov``; odd differences favour the high side."""
    fov = tuple(int(f) for f in fov)
    if len(fov) != 3 or any(f < 1 for f in fov):
        raise ValueError(f"invalid FOV {fov}")
    voxels = np.asarray(voxels)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if fov == geometry.dims:
        return geometry, voxels
    out = np.zeros(fov, dtype=voxels.dtype)
    src_sl, dst_sl, start = [], [], []
    for n, f in zip(geometry.dims, fov):
        if n >= f:
            lo = (n - f) // 2
            src_sl.append(slice(lo, lo + f))
            dst_sl.append(slice(0, f))
            start.append(lo)
        else:
            lo = (f - n) // 2
            src_sl.append(slice(0, n))
            dst_sl.append(slice(lo, lo + n))
            start.append(-lo)
    out[tuple(dst_sl)] = voxels[tuple(src_sl)]
    geom = ImageGeometry(fov, geometry.spacing, geometry.index_to_world(start), geometry.direction)
    return geom, out


def zscore_normalize(voxels, mask: BinaryMask | np.ndarray | None = None) -> np.ndarray:
    """(v - mean) / std over the mask (default: nonzero voxels), population std; 0 outside."""
    vox = np.asarray(voxels, dtype=np.float64)
    if mask is None:
        sel = vox != 0
    else:
        sel = np.asarray(mask.voxels if isinstance(mask, BinaryMask) else mask, dtype=bool)
        if sel.shape != vox.shape:
            raise GeometryMismatchError("mask shape does not match image")
    values = vox[sel]
    if values.size == 0:
        raise ConstantImageError("normalization mask is empty")
    mean = values.mean()
    std = values.std()
    if std < STD_EPS:
        raise ConstantImageError("image is constant inside the normalization mask")
    out = np.zeros_like(vox)
    out[sel] = (values - mean) / std
    return out


@dataclass
class PreprocessResult:
    geometry: ImageGeometry
    images: list[np.ndarray]
    labels: np.ndarray | None
    plan: PreprocessPlan
    log: list[str] = field(default_factory=list)


def preprocess_case(
    images: Sequence[tuple[ImageGeometry, np.ndarray]],
    labels: tuple[ImageGeometry, np.ndarray] | None = None,
    plan: PreprocessPlan | None = None,
) -> PreprocessResult:
    """Run the enabled steps on co-registered images (and optional labels)."""
    plan = plan or PreprocessPlan()
    if not images:
        raise ValueError("no images given")
    check_same_grid(*(g for g, _ in images), *([labels[0]] if labels else []))
    imgs = [(g, np.asarray(v, dtype=np.float64)) for g, v in images]
    lab = (labels[0], np.asarray(labels[1])) if labels else None
    steps = []

    if plan.reorient:
        plan.permutation, plan.flips = canonical_axes(imgs[0][0].direction_matrix)
        imgs = [reorient_to_canonical(g, v) for g, v in imgs]
        lab = reorient_to_canonical(*lab) if lab else None
        steps.append("reorient")
    if plan.resample:
        imgs = [resample_isotropic(g, v, plan.spacing, "linear") for g, v in imgs]
        lab = resample_isotropic(*lab, plan.spacing, "nearest") if lab else None
        steps.append("resample")
    if plan.crop:
        plan.crop_box = crop_to_brain(imgs)
        imgs = [apply_crop(g, v, plan.crop_box) for g, v in imgs]
        lab = apply_crop(*lab, plan.crop_box) if lab else None
        steps.append("crop")
    if plan.resize:
        imgs = [resize_fov(g, v, plan.fov, "linear") for g, v in imgs]
        lab = resize_fov(*lab, plan.fov, "nearest") if lab else None
        steps.append("resize")
    if plan.normalize:
        imgs = [(g, zscore_normalize(v)) for g, v in imgs]
        steps.append("normalize")
    return PreprocessResult(imgs[0][0], [v for _, v in imgs], lab[1] if lab else None, plan, steps)
