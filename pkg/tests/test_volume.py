"""Volume model and NIfTI-1 I/O tests."""

import struct

import numpy as np
import pytest

import vlsm
from vlsm.errors import DataError, NiftiFormatError

from conftest import random_cohort, random_mask


def build_nifti_bytes(dims, spacing, origin, datatype, bitpix, payload,
                      magic=b"n+1\x00", scl_slope=1.0, scl_inter=0.0,
                      quatern=(0.0, 0.0, 0.0), dim0=3):
    """Independent NIfTI-1 writer used as a cross-check oracle.

    Assembles the 348-byte header field by field at its documented offset,
    without going through the package's writer.
    """
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, dim0, *dims, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, scl_slope, scl_inter)
    struct.pack_into("<2h", hdr, 252, 1, 0)
    struct.pack_into("<3f", hdr, 256, *quatern)
    struct.pack_into("<3f", hdr, 268, *origin)
    struct.pack_into("<4s", hdr, 344, magic)
    return bytes(hdr) + b"\x00" * 4 + payload


def parse_nifti_header(raw):
    """Independent minimal header parser (oracle for emitted files)."""
    assert raw[344:348] == b"n+1\x00"
    dim = struct.unpack_from("<8h", raw, 40)
    pixdim = struct.unpack_from("<8f", raw, 76)
    (datatype,) = struct.unpack_from("<h", raw, 70)
    (bitpix,) = struct.unpack_from("<h", raw, 72)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    qoffset = struct.unpack_from("<3f", raw, 268)
    return {
        "dims": dim[1:4],
        "spacing": pixdim[1:4],
        "origin": qoffset,
        "datatype": datatype,
        "bitpix": bitpix,
        "vox_offset": vox_offset,
    }


class TestGeometry:
    def test_validation(self):
        with pytest.raises(DataError):
            vlsm.VolumeGeometry((0, 2, 2))
        with pytest.raises(DataError):
            vlsm.VolumeGeometry((2, 2, 2), spacing=(1.0, 0.0, 1.0))

    def test_compatibility_tolerance(self):
        a = vlsm.VolumeGeometry((4, 4, 4), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
        b = vlsm.VolumeGeometry((4, 4, 4), (1.0 + 5e-7, 1.0, 1.0), (0.0, 0.0, -5e-7))
        c = vlsm.VolumeGeometry((4, 4, 4), (1.0 + 5e-6, 1.0, 1.0))
        d = vlsm.VolumeGeometry((4, 4, 5))
        assert a.compatible(b) and b.compatible(a)
        assert not a.compatible(c)
        assert not a.compatible(d)
        with pytest.raises(DataError):
            a.require_compatible(c)


class TestNiftiRoundTrip:
    @pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.float32, bool])
    def test_round_trip_identity(self, tmp_path, dtype):
        rng = np.random.default_rng(3)
        geom = vlsm.VolumeGeometry((5, 4, 3), (0.5, 1.0, 2.25), (-4.5, 0.0, 8.0))
        if dtype is bool:
            vol = rng.random(geom.dims) < 0.5
        elif np.dtype(dtype).kind == "f":
            vol = rng.normal(size=geom.dims).astype(dtype)
        else:
            vol = rng.integers(0, 100, size=geom.dims).astype(dtype)
        path = tmp_path / "v.nii"
        vlsm.write_nifti(geom, vol, path)
        geom2, vol2 = vlsm.read_nifti(path)
        assert geom.compatible(geom2)
        expected = vol.astype(np.uint8) if dtype is bool else vol
        assert vol2.dtype == expected.dtype
        assert np.array_equal(vol2, expected)

    def test_round_trip_gzip(self, tmp_path):
        geom = vlsm.VolumeGeometry((3, 3, 3))
        vol = np.arange(27, dtype=np.float32).reshape(geom.dims, order="F")
        path = tmp_path / "v.nii.gz"
        vlsm.write_nifti(geom, vol, path)
        geom2, vol2 = vlsm.read_nifti(path)
        assert geom.compatible(geom2)
        assert np.array_equal(vol, vol2)

    def test_single_voxel_mask_is_353_bytes(self, tmp_path):
        geom = vlsm.VolumeGeometry((1, 1, 1))
        path = tmp_path / "tiny.nii"
        vlsm.write_nifti(geom, np.zeros((1, 1, 1), dtype=bool), path)
        assert path.stat().st_size == 353

    def test_mask_header_datatype_and_bitpix(self, tmp_path):
        geom = vlsm.VolumeGeometry((2, 2, 2))
        path = tmp_path / "m.nii"
        vlsm.write_nifti(geom, np.ones((2, 2, 2), dtype=bool), path)
        header = parse_nifti_header(path.read_bytes())
        assert header["datatype"] == 2
        assert header["bitpix"] == 8
        assert header["vox_offset"] == 352.0

    def test_float64_narrowed_to_float32(self, tmp_path):
        geom = vlsm.VolumeGeometry((2, 2, 2))
        vol = np.full((2, 2, 2), 1.0 / 3.0)
        path = tmp_path / "f.nii"
        vlsm.write_nifti(geom, vol, path)
        _, vol2 = vlsm.read_nifti(path)
        assert vol2.dtype == np.float32
        assert np.array_equal(vol2, vol.astype(np.float32))

    def test_dimension_overflow(self, tmp_path):
        geom = vlsm.VolumeGeometry((40000, 1, 1))
        with pytest.raises(DataError, match="overflow"):
            vlsm.write_nifti(geom, np.zeros(40000, dtype=np.uint8), tmp_path / "x.nii")


class TestNiftiForeignFiles:
    def test_independent_writer_cross_check(self, tmp_path):
        # 2x2x2 float32 values 0..7 in x-fastest order, written byte by byte
        payload = struct.pack("<8f", *range(8))
        raw = build_nifti_bytes((2, 2, 2), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0),
                                datatype=16, bitpix=32, payload=payload)
        path = tmp_path / "foreign.nii"
        path.write_bytes(raw)
        geom, vol = vlsm.read_nifti(path)
        assert geom.dims == (2, 2, 2)
        assert np.array_equal(vol.ravel(order="F"), np.arange(8, dtype=np.float32))
        # and the specific corner the linearization pins down
        assert vol[1, 0, 0] == 1.0
        assert vol[0, 1, 0] == 2.0
        assert vol[0, 0, 1] == 4.0

    def test_bad_magic(self, tmp_path):
        raw = build_nifti_bytes((1, 1, 1), (1, 1, 1), (0, 0, 0), 2, 8, b"\x00",
                                magic=b"ni1\x00")
        path = tmp_path / "bad.nii"
        path.write_bytes(raw)
        with pytest.raises(NiftiFormatError, match="bad magic"):
            vlsm.read_nifti(path)

    def test_unsupported_datatype(self, tmp_path):
        raw = build_nifti_bytes((1, 1, 1), (1, 1, 1), (0, 0, 0), 8, 32, b"\x00" * 4)
        path = tmp_path / "dt.nii"
        path.write_bytes(raw)
        with pytest.raises(NiftiFormatError, match="datatype"):
            vlsm.read_nifti(path)

    def test_wrong_dim0(self, tmp_path):
        raw = build_nifti_bytes((2, 2, 1), (1, 1, 1), (0, 0, 0), 2, 8, b"\x00" * 4,
                                dim0=2)
        path = tmp_path / "d0.nii"
        path.write_bytes(raw)
        with pytest.raises(NiftiFormatError, match=r"dim\[0\]"):
            vlsm.read_nifti(path)

    def test_truncated_payload(self, tmp_path):
        raw = build_nifti_bytes((4, 4, 4), (1, 1, 1), (0, 0, 0), 16, 32,
                                b"\x00" * 100)
        path = tmp_path / "t.nii"
        path.write_bytes(raw)
        with pytest.raises(NiftiFormatError, match="truncated payload"):
            vlsm.read_nifti(path)

    def test_scaling_applied_when_not_identity(self, tmp_path):
        payload = struct.pack("<4h", 1, 2, 3, 4)
        raw = build_nifti_bytes((4, 1, 1), (1, 1, 1), (0, 0, 0), 4, 16, payload,
                                scl_slope=2.0, scl_inter=1.0)
        path = tmp_path / "s.nii"
        path.write_bytes(raw)
        _, vol = vlsm.read_nifti(path)
        assert vol.dtype == np.float32
        assert np.array_equal(vol.ravel(order="F"), [3.0, 5.0, 7.0, 9.0])

    def test_rotation_quaternion_warns(self, tmp_path):
        raw = build_nifti_bytes((1, 1, 1), (1, 1, 1), (0, 0, 0), 2, 8, b"\x01",
                                quatern=(0.1, 0.0, 0.0))
        path = tmp_path / "q.nii"
        path.write_bytes(raw)
        with pytest.warns(UserWarning, match="quaternion"):
            vlsm.read_nifti(path)

    def test_read_mask_binarizes_nonzero(self, tmp_path):
        payload = struct.pack("<4B", 0, 1, 255, 7)
        raw = build_nifti_bytes((4, 1, 1), (1, 1, 1), (0, 0, 0), 2, 8, payload)
        path = tmp_path / "m.nii"
        path.write_bytes(raw)
        mask = vlsm.read_mask(path)
        assert mask.linear().tolist() == [False, True, True, True]


class TestRoiArithmetic:
    def test_overlap_single_subject_equals_mask(self, geom4):
        rng = np.random.default_rng(0)
        m = random_mask(geom4, rng)
        # cohort requires >= 2 subjects; use the same mask twice and halve
        cohort = vlsm.Cohort((("a", m), ("b", m)), np.array([0.0, 1.0]))
        counts = vlsm.overlap_map(cohort).counts
        assert set(np.unique(counts)) <= {0, 2}
        assert np.array_equal(counts == 2, m.voxels)

    def test_overlap_matches_double_loop(self, geom4):
        rng = np.random.default_rng(1)
        cohort = random_cohort(geom4, 3, rng)
        counts = vlsm.overlap_map(cohort).counts
        expected = np.zeros(geom4.dims, dtype=int)
        for x in range(4):
            for y in range(4):
                for z in range(4):
                    for _, mask in cohort.subjects:
                        expected[x, y, z] += bool(mask.voxels[x, y, z])
        assert np.array_equal(counts, expected)

    def test_overlap_subject_order_invariant(self, geom4):
        rng = np.random.default_rng(2)
        cohort = random_cohort(geom4, 5, rng)
        perm = [3, 1, 4, 0, 2]
        shuffled = vlsm.Cohort(
            tuple(cohort.subjects[i] for i in perm), cohort.scores[perm]
        )
        assert np.array_equal(
            vlsm.overlap_map(cohort).counts, vlsm.overlap_map(shuffled).counts
        )

    def test_percent_damage_cases(self, geom4):
        roi_vox = np.zeros(geom4.dims, dtype=bool)
        roi_vox[0:2, 0:2, 0:2] = True      # 8-voxel ROI
        roi = vlsm.BinaryMask(geom4, roi_vox)
        full = vlsm.BinaryMask(geom4, np.ones(geom4.dims, dtype=bool))
        empty = vlsm.BinaryMask(geom4, np.zeros(geom4.dims, dtype=bool))
        half_vox = np.zeros(geom4.dims, dtype=bool)
        half_vox[0:2, 0:2, 0] = True       # covers exactly 4 of the 8
        half = vlsm.BinaryMask(geom4, half_vox)
        assert vlsm.percent_damage(full, roi) == 1.0
        assert vlsm.percent_damage(empty, roi) == 0.0
        assert vlsm.percent_damage(half, roi) == 0.5
        assert vlsm.percent_damage(roi, roi) == 1.0
        with pytest.raises(DataError, match="empty"):
            vlsm.percent_damage(full, empty)

    def test_percent_damage_monotone(self, geom4):
        rng = np.random.default_rng(3)
        roi = random_mask(geom4, rng, 0.3)
        if roi.size() == 0:
            pytest.skip("empty roi draw")
        vox = rng.random(geom4.dims) < 0.2
        base = vlsm.percent_damage(vlsm.BinaryMask(geom4, vox), roi)
        grown = vox.copy()
        grown[rng.random(geom4.dims) < 0.3] = True
        assert vlsm.percent_damage(vlsm.BinaryMask(geom4, grown), roi) >= base


class TestCohort:
    def test_validation(self, geom4):
        rng = np.random.default_rng(4)
        m = random_mask(geom4, rng)
        with pytest.raises(DataError, match="unique"):
            vlsm.Cohort((("a", m), ("a", m)), np.array([0.0, 1.0]))
        with pytest.raises(DataError, match="at least 2"):
            vlsm.Cohort((("a", m),), np.array([0.0]))
        with pytest.raises(DataError, match="scores"):
            vlsm.Cohort((("a", m), ("b", m)), np.array([0.0, 1.0, 2.0]))
        other = random_mask(vlsm.VolumeGeometry((5, 4, 4)), rng)
        with pytest.raises(DataError, match="incompatible"):
            vlsm.Cohort((("a", m), ("b", other)), np.array([0.0, 1.0]))

    def test_cohort_dir_round_trip(self, tmp_path, geom4):
        rng = np.random.default_rng(5)
        cohort = random_cohort(geom4, 4, rng)
        vlsm.write_cohort_dir(cohort, tmp_path / "c")
        back = vlsm.read_cohort_dir(tmp_path / "c")
        assert back.ids == cohort.ids
        assert np.array_equal(back.scores, cohort.scores)
        for (_, m1), (_, m2) in zip(cohort.subjects, back.subjects):
            assert np.array_equal(m1.voxels, m2.voxels)

    def test_missing_scores_csv(self, tmp_path):
        with pytest.raises(DataError, match="scores.csv"):
            vlsm.read_cohort_dir(tmp_path)
