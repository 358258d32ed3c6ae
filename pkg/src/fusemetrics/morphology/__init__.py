"""3D binary morphology: connected components, dilation, boundary, exact EDT.

The two hot loops (the 1-D lower-envelope distance pass and union-find
labeling) come from the compiled ``_kernels`` extension when it is built,
otherwise from ``_pure``. Set ``FUSEMETRICS_PURE_PYTHON=1`` to force the
fallback. Every public function accepts ``backend="cython"|"python"`` to pin
one explicitly.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np

from ..volume import BinaryMask, ImageGeometry
from . import _pure

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("FUSEMETRICS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND = "cython"
else:
    BACKEND = "python"

CONNECTIVITIES = (6, 18, 26)


def available_backends() -> tuple[str, ...]:
    return ("cython", "python") if _compiled is not None else ("python",)


def _kernels(backend: str | None):
    backend = backend or BACKEND
    if backend == "python":
        return _pure
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


def neighbour_offsets(connectivity: int) -> np.ndarray:
    """All nonzero offsets in the 3x3x3 cube allowed by ``connectivity``."""
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity}")
    max_l1 = {6: 1, 18: 2, 26: 3}[connectivity]
    offs = [o for o in itertools.product((-1, 0, 1), repeat=3) if 0 < sum(map(abs, o)) <= max_l1]
    return np.array(offs, dtype=np.intp)


def _backward_offsets(connectivity: int) -> np.ndarray:
    offs = [tuple(o) for o in neighbour_offsets(connectivity) if tuple(o) < (0, 0, 0)]
    return np.ascontiguousarray(np.array(offs, dtype=np.intp))


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    geometry: ImageGeometry
    labels: np.ndarray
    count: int
    sizes: np.ndarray  # sizes[i] is the voxel count of component i + 1
    connectivity: int = 26

    def component(self, cid: int) -> np.ndarray:
        return self.labels == cid


def connected_components(mask: BinaryMask, connectivity: int = 26, backend: str | None = None) -> ComponentLabeling:
    """Label connected components; ids follow x-fastest raster order of each first voxel."""
    offsets = _backward_offsets(connectivity)
    # transposed view is (nz, ny, nx): C raster order over it is x-fastest
    arr = np.ascontiguousarray(mask.voxels.T, dtype=np.uint8)
    labels_t, count = _kernels(backend).label_components(arr, offsets)
    labels = np.ascontiguousarray(np.asarray(labels_t).T)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:].astype(np.int64)
    return ComponentLabeling(mask.geometry, labels, int(count), sizes, connectivity)


def _shift_or(arr: np.ndarray, offsets) -> np.ndarray:
    out = arr.copy()
    nx, ny, nz = arr.shape
    for dx, dy, dz in offsets:
        src = arr[max(0, -dx) : nx - max(0, dx), max(0, -dy) : ny - max(0, dy), max(0, -dz) : nz - max(0, dz)]
        out[max(0, dx) : nx - max(0, -dx), max(0, dy) : ny - max(0, -dy), max(0, dz) : nz - max(0, -dz)] |= src
    return out


def dilate(mask: BinaryMask, radius_voxels: int = 1, connectivity: int = 26) -> BinaryMask:
    """Iterated dilation with the 6- or 26-neighbourhood unit element."""
    if connectivity not in (6, 26):
        raise ValueError("dilation connectivity must be 6 or 26")
    if radius_voxels < 1:
        raise ValueError("radius must be >= 1")
    offsets = neighbour_offsets(connectivity).tolist()
    arr = mask.voxels.copy()
    for _ in range(radius_voxels):
        if not arr.any():
            break
        arr = _shift_or(arr, offsets)
    return BinaryMask(mask.geometry, arr)


def boundary(mask: BinaryMask) -> BinaryMask:
    """True voxels with at least one 6-neighbour that is false or off-grid."""
    arr = mask.voxels
    padded = np.pad(arr, 1, constant_values=False)
    interior = arr.copy()
    for axis in range(3):
        for step in (-1, 1):
            interior &= np.roll(padded, step, axis=axis)[1:-1, 1:-1, 1:-1]
    return BinaryMask(mask.geometry, arr & ~interior)


def squared_distance_transform(
    mask: np.ndarray, spacing=(1.0, 1.0, 1.0), backend: str | None = None
) -> np.ndarray:
    """Exact squared Euclidean distance (mm^2) to the nearest true voxel center."""
    kern = _kernels(backend)
    f = np.where(np.asarray(mask, dtype=bool), 0.0, np.inf)
    for axis in range(3):
        moved = np.ascontiguousarray(np.moveaxis(f, axis, -1))
        lines = moved.reshape(-1, moved.shape[-1])
        kern.edt_sq_pass(lines, float(spacing[axis]) ** 2)
        f = np.moveaxis(lines.reshape(moved.shape), -1, axis)
    return np.ascontiguousarray(f)


def distance_transform(mask: BinaryMask, backend: str | None = None) -> np.ndarray:
    """Per-voxel Euclidean distance in mm to the nearest true voxel; +inf if the mask is empty."""
    return np.sqrt(squared_distance_transform(mask.voxels, mask.geometry.spacing, backend))


__all__ = [
    "BACKEND",
    "ComponentLabeling",
    "available_backends",
    "boundary",
    "connected_components",
    "dilate",
    "distance_transform",
    "neighbour_offsets",
    "squared_distance_transform",
]
