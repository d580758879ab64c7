"""3D volume data model, NIfTI-1 I/O, and ROI arithmetic.

Every map in the package lives on a shared grid descriptor
(:class:`VolumeGeometry`).  Voxel data is held as numpy arrays indexed
``[x, y, z]``; the canonical linearization is x-fastest (Fortran ravel),
matching the on-disk order of NIfTI volumes.
"""

from __future__ import annotations

import csv
import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NiftiFormatError

#: Absolute tolerance (mm) when comparing spacings and origins.
GEOMETRY_TOLERANCE_MM = 1e-6

# NIfTI-1 single-file layout: 348-byte header, 4-byte extension indicator,
# data at byte 352.  Only little-endian files with a 3D payload are handled.
_HEADER_SIZE = 348
_VOX_OFFSET = 352
_MAGIC = b"n+1\x00"

# datatype code -> numpy dtype (little-endian on disk)
_DTYPES = {2: np.dtype("<u1"), 4: np.dtype("<i2"), 16: np.dtype("<f4")}
_BITPIX = {2: 8, 4: 16, 16: 32}


@dataclass(frozen=True)
class VolumeGeometry:
    """Grid descriptor: voxel counts, voxel size in mm, and origin in mm."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise DataError(f"dims must be three positive voxel counts, got {self.dims}")
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise DataError(f"spacing must be three positive lengths, got {self.spacing}")
        if len(origin) != 3:
            raise DataError(f"origin must have three components, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def compatible(self, other: "VolumeGeometry") -> bool:
        """Exact dims, spacing/origin equal within ``GEOMETRY_TOLERANCE_MM``."""
        if self.dims != other.dims:
            return False
        for a, b in zip(self.spacing + self.origin, other.spacing + other.origin):
            if abs(a - b) > GEOMETRY_TOLERANCE_MM:
                return False
        return True

    def require_compatible(self, other: "VolumeGeometry", what: str = "volumes"):
        if not self.compatible(other):
            raise DataError(
                f"incompatible geometries for {what}: "
                f"{self.dims}/{self.spacing}/{self.origin} vs "
                f"{other.dims}/{other.spacing}/{other.origin}"
            )


def _as_grid(geometry: VolumeGeometry, values, dtype) -> np.ndarray:
    """Normalize 1D (x-fastest) or 3D input to a read-only [x,y,z] array."""
    arr = np.asarray(values)
    if arr.ndim == 1:
        if arr.size != geometry.n_voxels:
            raise DataError(
                f"volume has {arr.size} values, geometry expects {geometry.n_voxels}"
            )
        arr = arr.reshape(geometry.dims, order="F")
    elif arr.shape != geometry.dims:
        raise DataError(f"volume shape {arr.shape} does not match dims {geometry.dims}")
    if arr.dtype == dtype and arr.base is None and not arr.flags.writeable:
        return arr
    arr = np.array(arr, dtype=dtype, order="F")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BinaryMask:
    """A boolean field on a geometry (one lesion, one ROI, one threshold mask)."""

    geometry: VolumeGeometry
    voxels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "voxels", _as_grid(self.geometry, self.voxels, bool))

    def size(self) -> int:
        return int(self.voxels.sum())

    def linear(self) -> np.ndarray:
        """Voxels flattened in x-fastest order."""
        return self.voxels.ravel(order="F")


@dataclass(frozen=True)
class CountMap:
    """Per-voxel non-negative counts (e.g. how many subjects are lesioned)."""

    geometry: VolumeGeometry
    counts: np.ndarray

    def __post_init__(self):
        counts = _as_grid(self.geometry, self.counts, np.int32)
        if counts.min(initial=0) < 0:
            raise DataError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class Cohort:
    """Aligned subject IDs, lesion masks, and scalar deficit scores."""

    subjects: tuple
    scores: np.ndarray

    def __post_init__(self):
        subjects = tuple((str(sid), mask) for sid, mask in self.subjects)
        scores = np.asarray(self.scores, dtype=float)
        if len(subjects) < 2:
            raise DataError(f"cohort needs at least 2 subjects, got {len(subjects)}")
        if scores.shape != (len(subjects),):
            raise DataError(
                f"{len(subjects)} subjects but {scores.size} scores"
            )
        ids = [sid for sid, _ in subjects]
        if len(set(ids)) != len(ids):
            raise DataError("subject ids must be unique")
        geom = subjects[0][1].geometry
        for sid, mask in subjects[1:]:
            geom.require_compatible(mask.geometry, f"subject {sid}")
        scores.setflags(write=False)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "scores", scores)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def ids(self) -> tuple:
        return tuple(sid for sid, _ in self.subjects)

    @property
    def geometry(self) -> VolumeGeometry:
        return self.subjects[0][1].geometry

    def lesion_matrix(self) -> np.ndarray:
        """Boolean (n_subjects, n_voxels) matrix in x-fastest voxel order."""
        return np.stack([mask.linear() for _, mask in self.subjects])


# ---------------------------------------------------------------------------
# NIfTI-1 I/O
# ---------------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_nifti(path):
    """Read a NIfTI-1 single-file volume.

    Returns ``(geometry, volume)`` where ``volume`` is a numpy array of the
    on-disk dtype (uint8, int16, or float32), shaped ``dims`` and indexed
    ``[x, y, z]``.  Scaling (scl_slope/scl_inter) is applied only when it is
    not the identity, in which case the result is float32.  Rotation
    quaternions are ignored with a warning; spacing and offset are honoured.
    """
    raw = _read_bytes(path)
    if len(raw) < _HEADER_SIZE:
        raise NiftiFormatError(
            f"{path}: truncated header, {len(raw)} bytes < {_HEADER_SIZE}"
        )
    magic = raw[344:348]
    if magic != _MAGIC:
        raise NiftiFormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != _HEADER_SIZE:
        raise NiftiFormatError(
            f"{path}: sizeof_hdr = {sizeof_hdr}, expected {_HEADER_SIZE} "
            "(not a little-endian NIfTI-1 header)"
        )
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3:
        raise NiftiFormatError(f"{path}: dim[0] = {dim[0]}, only 3D volumes supported")
    (datatype,) = struct.unpack_from("<h", raw, 70)
    if datatype not in _DTYPES:
        raise NiftiFormatError(
            f"{path}: unsupported datatype code {datatype}, "
            f"supported: {sorted(_DTYPES)}"
        )
    pixdim = struct.unpack_from("<8f", raw, 76)
    if any(p <= 0 for p in pixdim[1:4]):
        raise NiftiFormatError(f"{path}: non-positive pixdim[1..3] = {pixdim[1:4]}")
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    offset = int(round(vox_offset))
    if offset < _HEADER_SIZE:
        raise NiftiFormatError(f"{path}: vox_offset = {vox_offset} < {_HEADER_SIZE}")
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    quatern = struct.unpack_from("<3f", raw, 256)
    qoffset = struct.unpack_from("<3f", raw, 268)
    if any(q != 0.0 for q in quatern):
        warnings.warn(
            f"{path}: rotation quaternion {quatern} ignored, "
            "only spacing and offset are honoured",
            stacklevel=2,
        )

    dims = (dim[1], dim[2], dim[3])
    dtype = _DTYPES[datatype]
    n = dims[0] * dims[1] * dims[2]
    need = n * dtype.itemsize
    if len(raw) - offset < need:
        raise NiftiFormatError(
            f"{path}: truncated payload, need {need} bytes for dim {dims} "
            f"but only {len(raw) - offset} present after vox_offset"
        )
    volume = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
    volume = volume.astype(dtype.newbyteorder("="), copy=True).reshape(dims, order="F")
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        volume = volume.astype(np.float32) * np.float32(scl_slope) + np.float32(scl_inter)

    geometry = VolumeGeometry(
        dims=dims,
        spacing=(float(pixdim[1]), float(pixdim[2]), float(pixdim[3])),
        origin=(float(qoffset[0]), float(qoffset[1]), float(qoffset[2])),
    )
    return geometry, volume


def read_mask(path) -> BinaryMask:
    """Read a volume and binarize it (any nonzero voxel counts as true)."""
    geometry, volume = read_nifti(path)
    return BinaryMask(geometry, volume != 0)


def _output_dtype(volume: np.ndarray):
    """Pick the on-disk datatype code for an array (may cast)."""
    kind = volume.dtype.kind
    if kind == "b":
        return 2, volume.astype(np.uint8)
    if volume.dtype == np.uint8:
        return 2, volume
    if volume.dtype == np.int16:
        return 4, volume
    if kind in "iu":
        if volume.size and (volume.min() < -32768 or volume.max() > 32767):
            raise DataError("integer volume exceeds the int16 range of the format")
        return 4, volume.astype(np.int16)
    if kind == "f":
        return 16, volume.astype(np.float32, copy=False)
    raise DataError(f"cannot serialize volume of dtype {volume.dtype}")


def write_nifti(geometry: VolumeGeometry, volume, path) -> None:
    """Write a volume as a little-endian NIfTI-1 single file.

    Boolean/uint8 data is written as datatype 2, int16 as 4, floats as 32-bit
    (datatype 16); float64 input is therefore narrowed.  Spacing and origin
    are stored as float32 header fields.  Paths ending in ``.gz`` are
    gzip-compressed with a zeroed timestamp so output bytes stay
    reproducible.
    """
    arr = np.asarray(volume)
    if arr.ndim == 1:
        if arr.size != geometry.n_voxels:
            raise DataError(
                f"volume has {arr.size} values, geometry expects {geometry.n_voxels}"
            )
        arr = arr.reshape(geometry.dims, order="F")
    elif arr.shape != geometry.dims:
        raise DataError(f"volume shape {arr.shape} does not match dims {geometry.dims}")
    if max(geometry.dims) > 32767:
        raise DataError(
            f"dims {geometry.dims} overflow the int16 header fields of the format"
        )
    datatype, data = _output_dtype(arr)

    header = struct.pack(
        "<i10s18sihcB8h3f4h8f3fh2B4f2i80s24s2h6f12f16s4s",
        _HEADER_SIZE,          # sizeof_hdr
        b"", b"",              # data_type, db_name (unused)
        0, 0, b"r", 0,         # extents, session_error, regular, dim_info
        3, *geometry.dims, 1, 1, 1, 1,          # dim[0..7]
        0.0, 0.0, 0.0,         # intent_p1..3
        0, datatype, _BITPIX[datatype], 0,      # intent_code, datatype, bitpix, slice_start
        1.0, *geometry.spacing, 0.0, 0.0, 0.0, 0.0,  # pixdim[0..7]
        float(_VOX_OFFSET), 1.0, 0.0,           # vox_offset, scl_slope, scl_inter
        0, 0, 0,               # slice_end, slice_code, xyzt_units
        0.0, 0.0, 0.0, 0.0,    # cal_max, cal_min, slice_duration, toffset
        0, 0,                  # glmax, glmin
        b"", b"",              # descrip, aux_file
        1, 0,                  # qform_code (pixdim+offset only), sform_code
        0.0, 0.0, 0.0,         # quatern_b, c, d (no rotation)
        *geometry.origin,      # qoffset_x, y, z
        *([0.0] * 12),         # srow_x, srow_y, srow_z
        b"",                   # intent_name
        _MAGIC,
    )
    payload = header + b"\x00\x00\x00\x00" + data.tobytes(order="F")

    path = Path(path)
    if path.suffix == ".gz":
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)


# ---------------------------------------------------------------------------
# ROI arithmetic
# ---------------------------------------------------------------------------

def overlap_map(cohort: Cohort) -> CountMap:
    """Per-voxel count of subjects whose lesion covers the voxel."""
    counts = np.zeros(cohort.geometry.dims, dtype=np.int32)
    for _, mask in cohort.subjects:
        counts += mask.voxels
    return CountMap(cohort.geometry, counts)


def percent_damage(mask: BinaryMask, roi: BinaryMask) -> float:
    """Fraction of ROI voxels covered by the mask, in [0, 1]."""
    mask.geometry.require_compatible(roi.geometry, "percent_damage")
    roi_size = roi.size()
    if roi_size == 0:
        raise DataError("percent_damage: ROI is empty")
    return int(np.count_nonzero(mask.voxels & roi.voxels)) / roi_size


# ---------------------------------------------------------------------------
# Cohort directory layout: masks/<id>.nii plus scores.csv
# ---------------------------------------------------------------------------

def write_cohort_dir(cohort: Cohort, directory) -> None:
    """Write per-subject mask files and the scores table."""
    directory = Path(directory)
    mask_dir = directory / "masks"
    mask_dir.mkdir(parents=True, exist_ok=True)
    for sid, mask in cohort.subjects:
        write_nifti(mask.geometry, mask.voxels, mask_dir / f"{sid}.nii")
    with open(directory / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "score"])
        for sid, score in zip(cohort.ids, cohort.scores):
            writer.writerow([sid, repr(float(score))])


def read_cohort_dir(directory) -> Cohort:
    """Load a cohort written by :func:`write_cohort_dir`."""
    directory = Path(directory)
    scores_path = directory / "scores.csv"
    if not scores_path.is_file():
        raise DataError(f"{directory}: missing scores.csv")
    rows = []
    with open(scores_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"subject_id", "score"} <= set(reader.fieldnames):
            raise DataError(f"{scores_path}: expected columns subject_id, score")
        for row in reader:
            rows.append((row["subject_id"], float(row["score"])))
    mask_dir = directory / "masks"
    subjects = []
    scores = []
    for sid, score in rows:
        mask_path = mask_dir / f"{sid}.nii"
        if not mask_path.is_file():
            gz = mask_path.with_suffix(".nii.gz")
            if gz.is_file():
                mask_path = gz
            else:
                raise DataError(f"missing lesion mask for subject {sid}: {mask_path}")
        subjects.append((sid, read_mask(mask_path)))
        scores.append(score)
    return Cohort(tuple(subjects), np.array(scores))
