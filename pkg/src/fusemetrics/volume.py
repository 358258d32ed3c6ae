"""Geometry-aware volume types, label schemas and region extraction.

Voxel arrays are numpy arrays of shape ``(nx, ny, nz)`` indexed ``[i, j, k]``.
Flattened in Fortran order they are x-fastest, which is the NIfTI on-disk
order; all index math in this package uses the ``[i, j, k]`` convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

GEOMETRY_TOL = 1e-4
ORTHO_TOL = 1e-6


class GeometryMismatchError(ValueError):
    """Two volumes do not share the same voxel grid."""


class SchemaError(ValueError):
    """A label or region is not valid under the active label schema."""


def _as_tuple3(values, name):
    out = tuple(float(v) for v in values)
    if len(out) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(out)}")
    return out


@dataclass(frozen=True)
class ImageGeometry:
    """Voxel grid in world (mm) coordinates.

    ``world = origin + direction @ (spacing * ijk)``. Direction columns are
    the unit world vectors of the i, j and k axes.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: tuple[tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        spacing = _as_tuple3(self.spacing, "spacing")
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        origin = _as_tuple3(self.origin, "origin")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3, 3):
            raise ValueError("direction must be a 3x3 matrix")
        if np.max(np.abs(d.T @ d - np.eye(3))) > ORTHO_TOL:
            raise ValueError("direction columns must be orthonormal")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", tuple(tuple(float(x) for x in row) for row in d))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def direction_matrix(self) -> np.ndarray:
        return np.array(self.direction, dtype=float)

    @property
    def affine(self) -> np.ndarray:
        """4x4 voxel-index to world matrix."""
        a = np.eye(4)
        a[:3, :3] = self.direction_matrix * np.asarray(self.spacing)[None, :]
        a[:3, 3] = self.origin
        return a

    def index_to_world(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=float)
        a = self.affine
        return ijk @ a[:3, :3].T + a[:3, 3]

    def matches(self, other: "ImageGeometry", tol: float = GEOMETRY_TOL) -> bool:
        if self.dims != other.dims:
            return False
        return (
            np.allclose(self.spacing, other.spacing, rtol=0, atol=tol)
            and np.allclose(self.origin, other.origin, rtol=0, atol=tol)
            and np.allclose(self.direction, other.direction, rtol=0, atol=tol)
        )

    def replace(self, **changes) -> "ImageGeometry":
        fields = dict(dims=self.dims, spacing=self.spacing, origin=self.origin, direction=self.direction)
        fields.update(changes)
        return ImageGeometry(**fields)


def voxel_volume_mm3(geom: ImageGeometry) -> float:
    sx, sy, sz = geom.spacing
    return sx * sy * sz


def check_same_grid(*geoms: ImageGeometry) -> None:
    """Raise GeometryMismatchError unless every geometry matches the first."""
    first = geoms[0]
    for g in geoms[1:]:
        if not first.matches(g):
            raise GeometryMismatchError(f"geometry mismatch: {first} vs {g}")


def _checked_array(geometry: ImageGeometry, voxels, dtype=None) -> np.ndarray:
    arr = np.asarray(voxels, dtype=dtype)
    if arr.shape != geometry.dims:
        raise ValueError(f"voxel array shape {arr.shape} does not match dims {geometry.dims}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelSchema:
    labels: Mapping[str, int] = field(default_factory=lambda: {"NCR": 1, "ED": 2, "ET": 3})
    regions: Mapping[str, frozenset] = field(
        default_factory=lambda: {"ET": frozenset({3}), "TC": frozenset({1, 3}), "WT": frozenset({1, 2, 3})}
    )

    def __post_init__(self):
        labels = {str(k): int(v) for k, v in self.labels.items()}
        values = list(labels.values())
        if any(v <= 0 for v in values) or len(set(values)) != len(values):
            raise SchemaError(f"label integers must be distinct and nonzero: {labels}")
        regions = {str(k): frozenset(int(x) for x in v) for k, v in self.regions.items()}
        known = set(values)
        for name, members in regions.items():
            if not members <= known:
                raise SchemaError(f"region {name} references unknown labels {sorted(members - known)}")
        for inner, outer in (("ET", "TC"), ("TC", "WT")):
            if inner in regions and outer in regions and not regions[inner] <= regions[outer]:
                raise SchemaError(f"region {inner} must be contained in {outer}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "regions", regions)

    @property
    def valid_values(self) -> frozenset:
        return frozenset(self.labels.values()) | {0}

    def label(self, name: str) -> int:
        try:
            return self.labels[name]
        except KeyError:
            raise SchemaError(f"label {name!r} not in schema") from None

    def region(self, name: str) -> frozenset:
        try:
            return self.regions[name]
        except KeyError:
            raise SchemaError(f"unknown region {name!r}") from None

    def validate(self, voxels: np.ndarray) -> None:
        present = np.unique(voxels)
        bad = sorted(set(present.tolist()) - self.valid_values)
        if bad:
            raise SchemaError(f"labels {bad} are not in the schema")

    def to_dict(self) -> dict:
        return {
            "labels": dict(self.labels),
            "regions": {k: sorted(v) for k, v in self.regions.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LabelSchema":
        return cls(labels=data["labels"], regions=data["regions"])


DEFAULT_SCHEMA = LabelSchema()
REGIONS = ("ET", "TC", "WT")


class _Volume:
    geometry: ImageGeometry
    voxels: np.ndarray

    @property
    def shape(self):
        return self.geometry.dims


@dataclass(frozen=True, eq=False)
class LabelVolume(_Volume):
    geometry: ImageGeometry
    voxels: np.ndarray
    schema: LabelSchema = DEFAULT_SCHEMA

    def __post_init__(self):
        arr = np.asarray(self.voxels)
        if arr.dtype.kind not in "biu":
            raise SchemaError(f"label voxels must be integers, got {arr.dtype}")
        if arr.size and arr.min() < 0:
            raise SchemaError("labels must be non-negative")
        arr = _checked_array(self.geometry, arr, dtype=np.uint8 if arr.max(initial=0) <= 255 else np.int32)
        self.schema.validate(arr)
        object.__setattr__(self, "voxels", arr)


@dataclass(frozen=True, eq=False)
class ProbabilityVolume(_Volume):
    geometry: ImageGeometry
    voxels: np.ndarray

    def __post_init__(self):
        arr = _checked_array(self.geometry, self.voxels, dtype=np.float64)
        if arr.size and (np.isnan(arr).any() or arr.min() < 0 or arr.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "voxels", arr)


@dataclass(frozen=True, eq=False)
class BinaryMask(_Volume):
    geometry: ImageGeometry
    voxels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "voxels", _checked_array(self.geometry, self.voxels, dtype=bool))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.geometry.matches(other.geometry) and np.array_equal(self.voxels, other.voxels)

    __hash__ = None

    @classmethod
    def empty(cls, geometry: ImageGeometry) -> "BinaryMask":
        return cls(geometry, np.zeros(geometry.dims, dtype=bool))


def region_mask(vol: LabelVolume, schema: LabelSchema | None, region: str) -> BinaryMask:
    """True where the voxel label belongs to ``region``'s label set."""
    schema = schema or vol.schema
    members = schema.region(region)
    schema.validate(vol.voxels)
    return BinaryMask(vol.geometry, np.isin(vol.voxels, sorted(members)))


def count_true(mask: BinaryMask) -> int:
    return int(np.count_nonzero(mask.voxels))


def label_volume_from_regions(
    geometry: ImageGeometry,
    masks: Mapping[str, np.ndarray],
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> np.ndarray:
    """Rebuild atomic labels from nested ET/TC/WT masks.

    Nesting is enforced by intersection: ET is kept only inside TC and WT,
    TC only inside WT.
    """
    et_label, ncr_label, ed_label = hierarchical_labels(schema)
    wt = np.asarray(masks["WT"], dtype=bool)
    tc = np.asarray(masks["TC"], dtype=bool) & wt
    et = np.asarray(masks["ET"], dtype=bool) & tc
    out = np.zeros(geometry.dims, dtype=np.uint8)
    out[wt] = ed_label
    out[tc] = ncr_label
    out[et] = et_label
    return out


def hierarchical_labels(schema: LabelSchema) -> tuple[int, int, int]:
    """Return the (ET, NCR, ED) atomic labels implied by the nested regions."""
    et = schema.region("ET")
    tc = schema.region("TC")
    wt = schema.region("WT")
    layers = (et, tc - et, wt - tc)
    if any(len(layer) != 1 for layer in layers):
        raise SchemaError("hierarchical reconstruction needs exactly one atomic label per nesting level")
    return tuple(next(iter(layer)) for layer in layers)


def stack_masks(masks: Sequence[BinaryMask]) -> np.ndarray:
    check_same_grid(*(m.geometry for m in masks))
    return np.stack([m.voxels for m in masks])
