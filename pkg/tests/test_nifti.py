import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusemetrics.nifti import (
    NiftiError,
    UnsupportedFormatError,
    build_header,
    read_label_volume,
    read_nifti,
    read_volume,
    write_label_volume,
    write_volume,
)
from fusemetrics.volume import ImageGeometry, SchemaError

from conftest import make_geom


def _raw_file(path, geometry, data, datatype="float32", patch=None, byteorder="<"):
    hdr = bytearray(build_header(geometry, datatype))
    if patch:
        patch(hdr)
    dtype = {"uint8": "u1", "int16": "i2", "int32": "i4", "float32": "f4"}[datatype]
    body = np.asarray(data).astype(byteorder + dtype).tobytes(order="F")
    blob = bytes(hdr) + b"\0\0\0\0" + body
    path.write_bytes(blob)
    return path


def test_roundtrip_float32(tmp_path):
    g = ImageGeometry((4, 4, 4), (1.5, 1.0, 2.0), (-10.0, 3.0, 7.5))
    data = np.random.default_rng(0).random((4, 4, 4)).astype(np.float32)
    write_volume(tmp_path / "a.nii", g, data, "float32")
    g2, back = read_volume(tmp_path / "a.nii")
    assert back.dtype == np.float64
    assert np.array_equal(back.astype(np.float32), data)
    assert g2.matches(g)


def test_scaling_applied(tmp_path):
    g = make_geom((2, 2, 2))
    p = _raw_file(tmp_path / "s.nii", g, np.full((2, 2, 2), 3), "int16", patch=lambda h: struct.pack_into("<2f", h, 112, 2.0, 1.0))
    _, values = read_volume(p)
    assert np.all(values == 7.0)


def test_nifti2_rejected(tmp_path):
    blob = bytearray(540 + 4)
    struct.pack_into("<i", blob, 0, 540)
    blob[4:8] = b"n+2\0"
    (tmp_path / "n2.nii").write_bytes(bytes(blob))
    with pytest.raises(UnsupportedFormatError):
        read_volume(tmp_path / "n2.nii")


def test_bad_magic_and_missing(tmp_path):
    g = make_geom((2, 2, 2))
    p = _raw_file(tmp_path / "m.nii", g, np.zeros((2, 2, 2)), patch=lambda h: h.__setitem__(slice(344, 348), b"ni1\0"))
    with pytest.raises(NiftiError):
        read_volume(p)
    with pytest.raises(FileNotFoundError):
        read_volume(tmp_path / "missing.nii")


def test_unsupported_datatype(tmp_path):
    g = make_geom((2, 2, 2))
    p = _raw_file(tmp_path / "d.nii", g, np.zeros((2, 2, 2)), "int16", patch=lambda h: struct.pack_into("<h", h, 70, 512))
    with pytest.raises(UnsupportedFormatError):
        read_volume(p)


def test_4d_singleton_accepted_and_true_4d_rejected(tmp_path):
    g = make_geom((2, 3, 4))
    data = np.arange(24).reshape(2, 3, 4)
    p = _raw_file(tmp_path / "t.nii", g, data, "int16", patch=lambda h: struct.pack_into("<8h", h, 40, 4, 2, 3, 4, 1, 1, 1, 1))
    _, values = read_volume(p)
    assert np.array_equal(values, data)
    p = _raw_file(tmp_path / "u.nii", g, data, "int16", patch=lambda h: struct.pack_into("<8h", h, 40, 4, 2, 3, 4, 2, 1, 1, 1))
    with pytest.raises(NiftiError):
        read_volume(p)


def test_big_endian_read(tmp_path):
    g = make_geom((3, 2, 2))
    data = np.arange(12, dtype=np.int16).reshape(3, 2, 2)
    hdr = bytearray(348)
    struct.pack_into(">i", hdr, 0, 348)
    struct.pack_into(">8h", hdr, 40, 3, 3, 2, 2, 1, 1, 1, 1)
    struct.pack_into(">2h", hdr, 70, 4, 16)
    struct.pack_into(">8f", hdr, 76, 1, 1, 1, 1, 1, 1, 1, 1)
    struct.pack_into(">f", hdr, 108, 352.0)
    hdr[344:348] = b"n+1\0"
    (tmp_path / "be.nii").write_bytes(bytes(hdr) + b"\0" * 4 + data.astype(">i2").tobytes(order="F"))
    g2, values = read_volume(tmp_path / "be.nii")
    assert np.array_equal(values, data)
    assert g2.matches(g)


def test_qform_fallback(tmp_path):
    g = make_geom((2, 2, 2), (2.0, 2.0, 2.0))

    def patch(h):
        struct.pack_into("<2h", h, 252, 1, 0)  # qform only
        struct.pack_into("<3f", h, 256, 0.0, 0.0, 1.0)  # 180 deg about z
        struct.pack_into("<3f", h, 268, 5.0, 6.0, 7.0)

    p = _raw_file(tmp_path / "q.nii", g, np.zeros((2, 2, 2)), patch=patch)
    g2, _ = read_volume(p)
    np.testing.assert_allclose(g2.direction_matrix, np.diag([-1.0, -1.0, 1.0]), atol=1e-7)
    np.testing.assert_allclose(g2.origin, (5, 6, 7))
    np.testing.assert_allclose(g2.spacing, (2, 2, 2))


def test_diagonal_sform_equals_pixdim_fallback(tmp_path):
    g = make_geom((3, 3, 3), (0.9, 1.1, 3.0))
    p1 = _raw_file(tmp_path / "s.nii", g, np.zeros((3, 3, 3)))
    p2 = _raw_file(tmp_path / "p.nii", g, np.zeros((3, 3, 3)), patch=lambda h: struct.pack_into("<2h", h, 252, 0, 0))
    g1, _ = read_volume(p1)
    g2, _ = read_volume(p2)
    assert g1.matches(g2, tol=1e-6)


def test_label_reading(tmp_path):
    g = make_geom((4, 1, 1))
    write_volume(tmp_path / "l.nii.gz", g, np.array([0, 1, 2, 3]).reshape(4, 1, 1), "uint8")
    vol = read_label_volume(tmp_path / "l.nii.gz")
    assert vol.voxels[:, 0, 0].tolist() == [0, 1, 2, 3]

    write_volume(tmp_path / "f.nii", g, np.array([0, 2.0004, 1, 3]).reshape(4, 1, 1), "float32")
    assert read_label_volume(tmp_path / "f.nii").voxels[1, 0, 0] == 2

    write_volume(tmp_path / "bad.nii", g, np.array([0, 2.4, 1, 3]).reshape(4, 1, 1), "float32")
    with pytest.raises(SchemaError):
        read_label_volume(tmp_path / "bad.nii")

    write_volume(tmp_path / "four.nii", g, np.array([0, 4, 1, 3]).reshape(4, 1, 1), "uint8")
    with pytest.raises(SchemaError):
        read_label_volume(tmp_path / "four.nii")


def test_write_overflow_and_bad_dtype(tmp_path):
    g = make_geom((1, 1, 1))
    with pytest.raises(OverflowError):
        write_volume(tmp_path / "o.nii", g, np.full((1, 1, 1), 300.0), "uint8")
    with pytest.raises(OverflowError):
        write_volume(tmp_path / "o.nii", g, np.full((1, 1, 1), 1.5), "int16")
    with pytest.raises(ValueError):
        write_volume(tmp_path / "o.nii", g, np.zeros((1, 1, 1)), "float64")


def test_gzip_detection_by_magic(tmp_path):
    g = make_geom((2, 2, 2))
    write_volume(tmp_path / "z.nii.gz", g, np.ones((2, 2, 2)), "uint8")
    raw = (tmp_path / "z.nii.gz").read_bytes()
    assert raw[:2] == b"\x1f\x8b"
    (tmp_path / "noext.nii").write_bytes(raw)
    _, values = read_volume(tmp_path / "noext.nii")
    assert values.sum() == 8
    assert gzip.decompress(raw)[344:348] == b"n+1\0"


def test_written_header_fields(tmp_path):
    g = ImageGeometry((3, 4, 5), (1.0, 2.0, 3.0), (1, 2, 3), ((0, 1, 0), (1, 0, 0), (0, 0, -1)))
    write_volume(tmp_path / "h.nii", g, np.zeros((3, 4, 5)), "int32")
    hdr, g2, data = read_nifti(tmp_path / "h.nii")
    assert hdr.sform_code == 1 and hdr.datatype == 8 and hdr.vox_offset == 352
    assert data.dtype == np.int32
    assert g2.matches(g)


def test_label_volume_writer(tmp_path):
    vol = read_label_volume
    g = make_geom((2, 2, 1))
    from fusemetrics.volume import LabelVolume

    lv = LabelVolume(g, np.array([[[0], [1]], [[2], [3]]]))
    write_label_volume(tmp_path / "lv.nii.gz", lv)
    assert np.array_equal(vol(tmp_path / "lv.nii.gz").voxels, lv.voxels)


dtypes = st.sampled_from(["uint8", "int16", "int32", "float32"])


@given(dtype=dtypes, shape=st.tuples(*(st.integers(1, 5),) * 3), seed=st.integers(0, 2**32 - 1), gz=st.booleans())
@settings(max_examples=40, deadline=None)
def test_roundtrip_property(tmp_path_factory, dtype, shape, seed, gz):
    rng = np.random.default_rng(seed)
    info = np.iinfo(dtype) if dtype != "float32" else None
    if info is not None:
        data = rng.integers(info.min, info.max, size=shape, endpoint=True).astype(dtype)
    else:
        data = (rng.standard_normal(shape) * 1e3).astype(np.float32)
    g = ImageGeometry(shape, tuple(rng.uniform(0.5, 3, 3)), tuple(rng.uniform(-50, 50, 3)))
    path = tmp_path_factory.mktemp("rt") / ("v.nii.gz" if gz else "v.nii")
    write_volume(path, g, data, dtype)
    _, g2, raw = read_nifti(path)
    assert raw.dtype == np.dtype(dtype)
    assert raw.tobytes() == data.tobytes()
    assert g2.matches(g)
