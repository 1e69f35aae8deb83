"""CT preprocessing chain: HU windowing, orientation standardization,
box-interpolation resize, and seeded augmentation.

The classification chain applies, in order: window -> reorient to LPS ->
resize to 128^3.  Augmentation (right-angle axial rotations and axis flips)
is a separate, training-only step.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import PayloadTypeError, ValidationError
from .volume import PayloadKind, Volume, reorient

CLASSIFIER_INPUT_DIMS = (128, 128, 128)
CLASSIFIER_ORIENTATION = "LPS"


@dataclass(frozen=True)
class WindowSpec:
    """Linear HU window: [level - width/2, level + width/2] maps to [0, 1]."""

    level: float = 180.0
    width: float = 440.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValidationError(f"window width must be > 0, got {self.width}")


DEFAULT_WINDOW = WindowSpec()


@dataclass(frozen=True)
class AugmentSpec:
    """Random right-angle rotation about the k axis plus independent flips.

    One rotation is drawn uniformly from {0} | rotation_angles; each axis in
    flip_axes is then flipped with probability 1/2.  Randomness is a pure
    function of (seed, salt), so per-scan augmentation is reproducible in any
    processing order.
    """

    rotation_angles: frozenset[int] = field(default_factory=frozenset)
    flip_axes: frozenset[int] = field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        angles = frozenset(int(a) for a in self.rotation_angles)
        if not angles <= {90, 180, 270}:
            raise ValidationError(f"rotation angles must be within {{90, 180, 270}}, got {angles}")
        axes = frozenset(int(a) for a in self.flip_axes)
        if not axes <= {0, 1, 2}:
            raise ValidationError(f"flip axes must be within {{0, 1, 2}}, got {axes}")
        object.__setattr__(self, "rotation_angles", angles)
        object.__setattr__(self, "flip_axes", axes)
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


def window(v: Volume, spec: WindowSpec = DEFAULT_WINDOW) -> Volume:
    """Map HU voxels through the window to [0, 1], clamped outside.

    x -> clamp((x - (level - width/2)) / width, 0, 1).  Geometry unchanged.
    """
    if v.kind is not PayloadKind.HU:
        raise PayloadTypeError(f"window requires an HU payload, got {v.kind.name}")
    lo = spec.level - spec.width / 2.0
    out = np.clip((v.data.astype(np.float64) - lo) / spec.width, 0.0, 1.0)
    return v.with_data(out, PayloadKind.REAL)


def _box_weights(n_src: int, n_tgt: int) -> np.ndarray:
    """Overlap-fraction matrix W (n_tgt x n_src) for 1D box resampling.

    Work in integer units of 1/(n_src*n_tgt): target box t spans
    [t*n_src, (t+1)*n_src), source voxel s spans [s*n_tgt, (s+1)*n_tgt).
    Every overlap length is an integer, so each row sums to exactly 1 and
    each column to exactly n_tgt/n_src, which makes constant preservation and
    global-mean preservation exact up to float64 rounding.
    """
    w = np.zeros((n_tgt, n_src), dtype=np.float64)
    for t in range(n_tgt):
        lo, hi = t * n_src, (t + 1) * n_src
        s_first = lo // n_tgt
        s_last = (hi - 1) // n_tgt
        for s in range(s_first, s_last + 1):
            overlap = min(hi, (s + 1) * n_tgt) - max(lo, s * n_tgt)
            w[t, s] = overlap / n_src
    return w


def resize_box(v: Volume, target_dims: tuple[int, int, int]) -> Volume:
    """Resample to target_dims with box interpolation.

    Each target voxel is the overlap-weighted average of the source voxels
    its box covers under the linear grid map; the 3D weights factorize per
    axis.  Spacing is rescaled so the physical extent is preserved.  HU input
    is promoted to REAL; MASK input is averaged as reals and re-binarized at
    0.5.
    """
    target_dims = tuple(int(d) for d in target_dims)
    if len(target_dims) != 3 or any(d <= 0 for d in target_dims):
        raise ValidationError(f"target dims must be three positive integers, got {target_dims}")

    data = v.data.astype(np.float64)
    for axis in range(3):
        if target_dims[axis] == v.dims[axis]:
            continue
        w = _box_weights(v.dims[axis], target_dims[axis])
        data = np.moveaxis(np.tensordot(w, data, axes=([1], [axis])), 0, axis)

    spacing = tuple(v.spacing[a] * v.dims[a] / target_dims[a] for a in range(3))
    if v.kind is PayloadKind.MASK:
        return Volume(target_dims, spacing, v.orientation, PayloadKind.MASK, data >= 0.5)
    return Volume(target_dims, spacing, v.orientation, PayloadKind.REAL, data)


def apply_rotation(v: Volume, angle: int) -> Volume:
    """Rotate by a right angle in the (i, j) plane about the k axis.

    90/270 degrees require square in-plane dims.  Dims and spacing follow the
    axis swap; orientation metadata is kept (augmented scans are synthetic
    variants, not reoriented acquisitions).
    """
    if angle not in (0, 90, 180, 270):
        raise ValidationError(f"rotation angle must be one of 0/90/180/270, got {angle}")
    if angle == 0:
        return v
    if angle in (90, 270) and v.dims[0] != v.dims[1]:
        raise ValidationError(
            f"{angle} degree rotation requires square in-plane dims, got {v.dims[:2]}"
        )
    k = angle // 90
    data = np.ascontiguousarray(np.rot90(v.data, k=k, axes=(0, 1)))
    if k % 2 == 1:
        dims = (v.dims[1], v.dims[0], v.dims[2])
        spacing = (v.spacing[1], v.spacing[0], v.spacing[2])
    else:
        dims, spacing = v.dims, v.spacing
    return Volume(dims, spacing, v.orientation, v.kind, data)


def apply_flip(v: Volume, axis: int) -> Volume:
    """Reverse one storage axis."""
    if axis not in (0, 1, 2):
        raise ValidationError(f"flip axis must be 0, 1, or 2, got {axis}")
    return v.with_data(np.ascontiguousarray(np.flip(v.data, axis=axis)))


def _augment_rng(seed: int, salt: str) -> np.random.Generator:
    digest = hashlib.blake2b(salt.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(np.random.SeedSequence([seed, int.from_bytes(digest, "little")]))


def augment(v: Volume, spec: AugmentSpec, salt: str = "") -> Volume:
    """Apply one seeded random rotation and independent random flips.

    Deterministic given (spec.seed, salt); salt is normally the scan id.  The
    voxel multiset is always preserved.
    """
    if spec.rotation_angles & {90, 270} and v.dims[0] != v.dims[1]:
        raise ValidationError(
            f"90/270 degree rotations requested on non-square in-plane dims {v.dims[:2]}"
        )
    rng = _augment_rng(spec.seed, salt)
    angles = [0] + sorted(spec.rotation_angles)
    angle = angles[int(rng.integers(len(angles)))]
    out = apply_rotation(v, angle)
    for axis in sorted(spec.flip_axes):
        if rng.random() < 0.5:
            out = apply_flip(out, axis)
    return out


def preprocess_for_classification(
    v: Volume,
    window_spec: WindowSpec = DEFAULT_WINDOW,
    target_dims: tuple[int, int, int] = CLASSIFIER_INPUT_DIMS,
) -> Volume:
    """Full classifier input chain: window -> reorient to LPS -> resize.

    Output is a REAL volume, orientation LPS, dims target_dims, values in
    [0, 1].  Augmentation is not part of this chain; apply it separately
    during training.
    """
    out = window(v, window_spec)
    out = reorient(out, CLASSIFIER_ORIENTATION)
    return resize_box(out, target_dims)
