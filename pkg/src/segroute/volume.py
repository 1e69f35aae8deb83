"""Core voxel data model: geometry, typed payloads, orientation, SVOL I/O.

A :class:`Volume` is an immutable 3D voxel grid.  Storage order is x-fastest
everywhere in this package: the voxel at index (i, j, k) lives at flat offset
``i + nx*j + nx*ny*k``.  In-memory arrays have shape ``(nx, ny, nz)`` and are
serialized with Fortran-order ravel, which yields exactly that flat order.

Orientation is a three-letter code, one letter per storage axis, naming the
anatomical direction of increasing index: one of {L,R}, one of {P,A}, one of
{S,I}, in any axis order (48 valid codes).  Only axis permutations and flips
are modeled; oblique direction cosines are out of scope.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    GeometryError,
    PayloadSizeMismatchError,
    SvolFormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ValidationError,
)

# Letter -> anatomical axis family.  The two letters of a family name the two
# polarities of the same physical axis.
_AXIS_FAMILY = {"L": 0, "R": 0, "P": 1, "A": 1, "S": 2, "I": 2}


class PayloadKind(enum.Enum):
    """The three voxel payload types, with their on-disk type codes."""

    HU = 0
    MASK = 1
    REAL = 2


# In-memory dtypes.  REAL volumes are held as float64 so that downstream
# numeric invariants (e.g. exact-mean resampling) are not limited by float32
# rounding; the file format stores REAL voxels as float32.
_MEMORY_DTYPE = {
    PayloadKind.HU: np.dtype("<i2"),
    PayloadKind.MASK: np.dtype("u1"),
    PayloadKind.REAL: np.dtype("<f8"),
}
_FILE_DTYPE = {
    PayloadKind.HU: np.dtype("<i2"),
    PayloadKind.MASK: np.dtype("u1"),
    PayloadKind.REAL: np.dtype("<f4"),
}


def parse_orientation(code: str) -> str:
    """Validate an orientation code and return it normalized to upper case.

    Raises ValidationError unless the code has exactly one letter from each
    of the {L,R}, {P,A}, {S,I} pairs.
    """
    if not isinstance(code, str):
        raise ValidationError(f"orientation code must be a string, got {type(code).__name__}")
    code = code.upper()
    if len(code) != 3 or any(c not in _AXIS_FAMILY for c in code):
        raise ValidationError(f"invalid orientation code {code!r}")
    families = [_AXIS_FAMILY[c] for c in code]
    if sorted(families) != [0, 1, 2]:
        raise ValidationError(f"orientation code {code!r} does not name three distinct axes")
    return code


def all_orientation_codes() -> list[str]:
    """All 48 valid orientation codes (3! axis orders x 2^3 polarities)."""
    import itertools

    pairs = ["LR", "PA", "SI"]
    codes = []
    for order in itertools.permutations(range(3)):
        for polarity in itertools.product((0, 1), repeat=3):
            codes.append("".join(pairs[order[a]][polarity[a]] for a in range(3)))
    return codes


@dataclass(frozen=True)
class Volume:
    """Immutable 3D voxel grid with physical spacing and orientation.

    ``data`` has shape ``dims`` = (nx, ny, nz) and a dtype fixed by ``kind``:
    int16 for HU, uint8 (values 0/1) for MASK, float64 (finite) for REAL.
    Treat the array as immutable; operations always return new volumes.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    orientation: str
    kind: PayloadKind
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValidationError(f"dims must be three positive integers, got {self.dims}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValidationError(f"spacing must be three positive reals, got {self.spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "orientation", parse_orientation(self.orientation))
        if not isinstance(self.kind, PayloadKind):
            raise ValidationError(f"kind must be a PayloadKind, got {self.kind!r}")
        data = np.asarray(self.data)
        if data.shape != dims:
            raise GeometryError(f"payload shape {data.shape} does not match dims {dims}")
        expected = _MEMORY_DTYPE[self.kind]
        if data.dtype != expected:
            data = data.astype(expected)
        if self.kind is PayloadKind.MASK:
            bad = (data != 0) & (data != 1)
            if bad.any():
                raise ValidationError("mask payload contains values outside {0, 1}")
        elif self.kind is PayloadKind.REAL:
            if not np.isfinite(data).all():
                raise ValidationError("real payload contains non-finite values")
        object.__setattr__(self, "data", data)

    # -- constructors ------------------------------------------------------

    @classmethod
    def hu(cls, data, spacing, orientation) -> "Volume":
        data = np.asarray(data)
        return cls(data.shape, tuple(spacing), orientation, PayloadKind.HU, data)

    @classmethod
    def mask(cls, data, spacing, orientation) -> "Volume":
        data = np.asarray(data)
        return cls(data.shape, tuple(spacing), orientation, PayloadKind.MASK, data)

    @classmethod
    def real(cls, data, spacing, orientation) -> "Volume":
        data = np.asarray(data)
        return cls(data.shape, tuple(spacing), orientation, PayloadKind.REAL, data)

    def with_data(self, data, kind: PayloadKind | None = None) -> "Volume":
        """Same geometry, new payload."""
        data = np.asarray(data)
        return Volume(data.shape, self.spacing, self.orientation, kind or self.kind, data)

    # -- comparisons -------------------------------------------------------

    def same_geometry(self, other: "Volume") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.orientation == other.orientation
        )

    def equals(self, other: "Volume") -> bool:
        """Bit-exact equality of geometry, kind, and every voxel."""
        return (
            self.same_geometry(other)
            and self.kind is other.kind
            and np.array_equal(self.data, other.data)
        )


def reorient(v: Volume, target: str) -> Volume:
    """Permute and flip storage axes so the volume's orientation is `target`.

    The same anatomical location keeps the same physical position: dims and
    spacing are permuted with the axes, and an axis whose polarity letter
    changes is reversed.  The voxel multiset is preserved.
    """
    target = parse_orientation(target)
    source = v.orientation
    if source == target:
        return v

    family_to_src = {_AXIS_FAMILY[c]: axis for axis, c in enumerate(source)}
    perm = [family_to_src[_AXIS_FAMILY[c]] for c in target]
    flips = [axis for axis, c in enumerate(target) if source[perm[axis]] != c]

    data = np.transpose(v.data, axes=perm)
    if flips:
        data = np.flip(data, axis=flips)
    dims = tuple(v.dims[p] for p in perm)
    spacing = tuple(v.spacing[p] for p in perm)
    return Volume(dims, spacing, target, v.kind, np.ascontiguousarray(data))


# -- SVOL serialization ----------------------------------------------------
#
# Little-endian throughout:
#   magic "SVOL" | u32 version=1 | u32 dtype code | 3 x u64 dims
#   | 3 x f64 spacing | 3 ASCII orientation bytes | 1 zero pad
#   | raw voxels, x-fastest.  No compression.

SVOL_MAGIC = b"SVOL"
SVOL_VERSION = 1
_HEADER = struct.Struct("<4sII3Q3d3sx")

_CODE_TO_KIND = {k.value: k for k in PayloadKind}


def write_svol(v: Volume, path) -> None:
    """Write a volume in the SVOL binary format."""
    header = _HEADER.pack(
        SVOL_MAGIC,
        SVOL_VERSION,
        v.kind.value,
        *v.dims,
        *v.spacing,
        v.orientation.encode("ascii"),
    )
    voxels = np.ascontiguousarray(v.data.ravel(order="F")).astype(_FILE_DTYPE[v.kind])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(voxels.tobytes())


def read_svol(path) -> Volume:
    """Read a volume from the SVOL binary format.

    Raises BadMagicError, UnsupportedVersionError, TruncatedPayloadError, or
    PayloadSizeMismatchError for the corresponding malformed inputs.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != SVOL_MAGIC:
        raise BadMagicError(f"{path}: not an SVOL file")
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated at {len(blob)} bytes")
    magic, version, code, nx, ny, nz, sx, sy, sz, orient = _HEADER.unpack_from(blob)
    if version != SVOL_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported SVOL version {version}")
    if code not in _CODE_TO_KIND:
        raise SvolFormatError(f"{path}: unknown dtype code {code}")
    kind = _CODE_TO_KIND[code]
    dims = (nx, ny, nz)
    if any(d <= 0 for d in dims):
        raise SvolFormatError(f"{path}: non-positive dims {dims}")
    file_dtype = _FILE_DTYPE[kind]
    expected = nx * ny * nz * file_dtype.itemsize
    payload = blob[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, dims {dims} require {expected}"
        )
    if len(payload) > expected:
        raise PayloadSizeMismatchError(
            f"{path}: payload has {len(payload)} bytes, dims {dims} require {expected}"
        )
    try:
        orientation = parse_orientation(orient.decode("ascii"))
    except (UnicodeDecodeError, ValidationError) as exc:
        raise SvolFormatError(f"{path}: bad orientation field: {exc}") from exc
    voxels = np.frombuffer(payload, dtype=file_dtype).reshape(dims, order="F")
    return Volume(dims, (sx, sy, sz), orientation, kind, voxels)
