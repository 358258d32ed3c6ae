import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fusemetrics.volume import (
    DEFAULT_SCHEMA,
    ImageGeometry,
    LabelSchema,
    LabelVolume,
    SchemaError,
    count_true,
    label_volume_from_regions,
    region_mask,
    voxel_volume_mm3,
)

from conftest import make_geom, make_labels, make_mask


def test_geometry_validation():
    with pytest.raises(ValueError):
        ImageGeometry((0, 2, 2))
    with pytest.raises(ValueError):
        ImageGeometry((2, 2, 2), (1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        ImageGeometry((2, 2, 2), direction=((1, 0, 0), (1, 1, 0), (0, 0, 1)))


def test_geometry_match_tolerance():
    a = make_geom((3, 3, 3))
    assert a.matches(a.replace(origin=(5e-5, 0, 0)))
    assert not a.matches(a.replace(origin=(2e-4, 0, 0)))
    assert not a.matches(make_geom((3, 3, 4)))


def test_index_to_world():
    g = ImageGeometry((4, 4, 4), (2.0, 1.0, 1.0), (10, 0, 0), ((-1, 0, 0), (0, -1, 0), (0, 0, 1)))
    np.testing.assert_allclose(g.index_to_world([1, 2, 3]), [8.0, -2.0, 3.0])


@pytest.mark.parametrize(
    "spacing,expected", [((1, 1, 1), 1.0), ((1, 1, 5), 5.0), ((0.5, 0.5, 0.5), 0.125)]
)
def test_voxel_volume(spacing, expected):
    assert voxel_volume_mm3(make_geom((2, 2, 2), spacing)) == expected


def test_count_true():
    assert count_true(make_mask(np.zeros((4, 4, 4)))) == 0
    assert count_true(make_mask(np.ones((2, 2, 2)))) == 8
    checker = np.indices((2, 2, 2)).sum(axis=0) % 2 == 0
    assert count_true(make_mask(checker)) == 4


def test_region_mask_examples():
    assert not region_mask(make_labels(np.zeros((3, 3, 3), np.uint8)), None, "WT").voxels.any()
    arr = np.zeros((3, 1, 1), np.uint8)
    arr[:, 0, 0] = [1, 2, 3]
    vol = make_labels(arr)
    assert count_true(region_mask(vol, None, "WT")) == 3
    assert region_mask(vol, DEFAULT_SCHEMA, "TC").voxels[:, 0, 0].tolist() == [True, False, True]


def test_region_mask_errors():
    vol = make_labels(np.zeros((2, 2, 2), np.uint8))
    with pytest.raises(SchemaError):
        region_mask(vol, None, "XX")
    with pytest.raises(SchemaError):
        make_labels(np.full((2, 2, 2), 4, np.uint8))


def test_schema_invariants():
    with pytest.raises(SchemaError):
        LabelSchema(labels={"A": 1, "B": 1})
    with pytest.raises(SchemaError):
        LabelSchema(labels={"A": 0})
    with pytest.raises(SchemaError):
        LabelSchema(regions={"ET": {3}, "TC": {1}, "WT": {1, 2, 3}})
    custom = LabelSchema(labels={"NCR": 1, "ED": 2, "ET": 4}, regions={"ET": {4}, "TC": {1, 4}, "WT": {1, 2, 4}})
    assert LabelSchema.from_dict(custom.to_dict()) == custom


label_arrays = arrays(np.uint8, (4, 3, 5), elements=st.integers(0, 3))


@given(label_arrays)
@settings(max_examples=60, deadline=None)
def test_region_properties(arr):
    vol = make_labels(arr)
    et, tc, wt = (region_mask(vol, None, r) for r in ("ET", "TC", "WT"))
    ed = arr == 2
    assert np.array_equal(wt.voxels, et.voxels | tc.voxels | ed)
    assert count_true(et) <= count_true(tc) <= count_true(wt)
    rebuilt = LabelVolume(vol.geometry, et.voxels.astype(np.uint8), LabelSchema(labels={"X": 1}, regions={"R": {1}}))
    assert region_mask(rebuilt, None, "R") == et


@given(label_arrays)
@settings(max_examples=40, deadline=None)
def test_reconstruct_from_regions_roundtrip(arr):
    vol = make_labels(arr)
    masks = {r: region_mask(vol, None, r).voxels for r in ("ET", "TC", "WT")}
    assert np.array_equal(label_volume_from_regions(vol.geometry, masks), arr)


def test_volumes_are_read_only():
    vol = make_labels(np.zeros((2, 2, 2), np.uint8))
    with pytest.raises(ValueError):
        vol.voxels[0, 0, 0] = 1
