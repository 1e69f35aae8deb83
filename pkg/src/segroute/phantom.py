"""Seeded synthetic liver-like CT phantoms with ground-truth masks.

Each phantom is a super-ellipsoid "liver" at parenchyma HU on an air
background, with kind-dependent spherical inclusions (many fluid cysts for
PLD, a few soft lesions for MCC) fully inside the liver, plus one small
perihepatic fluid pocket attached to the outside of the liver surface.  The
pocket is excluded from the ground-truth mask; it is the engineered hazard
that makes the broad fluid-reaching segmentation band over-segment, so that
routing a scan to the wrong specialist measurably costs Dice in both
directions.  Gaussian HU noise is added last.  Everything is a pure function
of the PhantomSpec (seed included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import GenerationError, ValidationError
from .models import MCC, PLD
from .pipeline import ScanRecord
from .volume import Volume, read_svol, write_svol

_HU_BACKGROUND = -1000.0
_REFERENCE_DIM = 96  # inclusion radii below are calibrated to this grid

# Inclusion radius ranges in voxels at the reference grid; scaled by
# min(dims)/96 so smaller phantoms stay generable.
_CYST_RADIUS = (2.5, 6.5)
_LESION_RADIUS = (4.0, 9.0)
_POCKET_RADIUS = (5.0, 8.0)
_PLACEMENT_RETRIES = 50


@dataclass(frozen=True)
class PhantomSpec:
    kind: str  # PLD (many cysts) or MCC (few lesions)
    dims: tuple[int, int, int] = (96, 96, 96)
    seed: int = 0
    cyst_count_range: tuple[int, int] = (15, 40)
    lesion_count_range: tuple[int, int] = (1, 6)
    parenchyma_hu: float = 60.0
    cyst_hu: float = 5.0
    lesion_hu: float = 35.0
    noise_sd: float = 8.0
    spacing: tuple[float, float, float] = (1.5, 1.5, 2.0)
    orientation: str = "RAS"

    def __post_init__(self):
        if self.kind not in (PLD, MCC):
            raise ValidationError(f"phantom kind must be {PLD} or {MCC}, got {self.kind!r}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 16 for d in dims):
            raise ValidationError(f"phantom dims must be >= 16 per axis, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        for name in ("cyst_count_range", "lesion_count_range"):
            lo, hi = (int(v) for v in getattr(self, name))
            if lo < 0 or hi < lo:
                raise ValidationError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if self.noise_sd < 0:
            raise ValidationError(f"noise_sd must be >= 0, got {self.noise_sd}")


def _superellipsoid_mask(dims, center, semi_axes, exponent) -> np.ndarray:
    # f is only evaluated inside the solid's bounding box; outside it is > 1.
    box = tuple(
        slice(max(0, int(np.floor(c - a)) - 1), min(n, int(np.ceil(c + a)) + 2))
        for c, a, n in zip(center, semi_axes, dims)
    )
    grids = np.ogrid[box]
    f = sum(
        np.abs((g - c) / a) ** exponent for g, c, a in zip(grids, center, semi_axes)
    )
    mask = np.zeros(dims, dtype=bool)
    mask[box] = f <= 1.0
    return mask


def _bounding_box(mask: np.ndarray, pad: int = 1) -> tuple[slice, slice, slice]:
    """Tight bounding box padded by one background ring (mask is strictly
    interior, so the pad stays in bounds and keeps cropped distance
    transforms exact)."""
    slices = []
    for axis in range(3):
        hit = np.flatnonzero(mask.any(axis=tuple(a for a in range(3) if a != axis)))
        slices.append(slice(max(0, hit[0] - pad), min(mask.shape[axis], hit[-1] + 1 + pad)))
    return tuple(slices)


def _paint_ball(data: np.ndarray, center, radius: float, value: float) -> None:
    lo = [max(0, int(np.floor(c - radius))) for c in center]
    hi = [min(n - 1, int(np.ceil(c + radius))) for c, n in zip(center, data.shape)]
    if any(a > b for a, b in zip(lo, hi)):
        return
    box = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
    grids = np.ogrid[box]
    inside = sum((g - c) ** 2 for g, c in zip(grids, center)) <= radius**2
    region = data[box]
    region[inside] = value
    data[box] = region


def _place_inclusions(
    rng: np.random.Generator,
    hu: np.ndarray,
    liver: np.ndarray,
    count: int,
    radius_range: tuple[float, float],
    scale: float,
    value: float,
) -> None:
    if count == 0:
        return
    # Distance to background keeps inclusions strictly inside the liver.
    # Candidate centers are the voxels sorted by that distance, descending,
    # so the viable prefix for a radius comes from one binary search.
    box = _bounding_box(liver)
    edt = ndimage.distance_transform_edt(liver[box]).ravel()
    order = np.argsort(edt, kind="stable")[::-1]
    depth_desc = edt[order]
    offsets = tuple(s.start for s in box)
    shape = tuple(s.stop - s.start for s in box)
    for _ in range(count):
        radius = float(rng.uniform(*radius_range)) * scale
        for _attempt in range(_PLACEMENT_RETRIES):
            n_viable = int(np.searchsorted(-depth_desc, -(radius + 1.0), side="left"))
            if n_viable:
                break
            radius *= 0.8
        else:
            raise GenerationError(
                f"could not place an inclusion of radius {radius:.2f}: liver too small"
            )
        pick = order[int(rng.integers(n_viable))]
        local = np.unravel_index(pick, shape)
        center = np.asarray([local[a] + offsets[a] for a in range(3)], dtype=np.float64)
        _paint_ball(hu, center, radius, value)


def _place_fluid_pocket(
    rng: np.random.Generator,
    hu: np.ndarray,
    liver: np.ndarray,
    center,
    semi_axes,
    exponent: float,
    scale: float,
    value: float,
) -> None:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    # Analytic ray-surface hit for the super-ellipsoid, then drop the pocket
    # sphere partly inside the surface so its outside part touches the liver
    # face-to-face.
    t = float(sum(abs(direction[a] / semi_axes[a]) ** exponent for a in range(3))) ** (
        -1.0 / exponent
    )
    radius = float(rng.uniform(*_POCKET_RADIUS)) * scale
    surface = np.asarray(center) + t * direction
    pocket_center = surface + 0.4 * radius * direction

    pocket = np.zeros(hu.shape, dtype=bool)
    _paint_ball(pocket, pocket_center, radius, True)
    pocket &= ~liver
    hu[pocket] = value


def generate_phantom(spec: PhantomSpec, scan_id: str | None = None) -> ScanRecord:
    """Deterministically build one phantom scan.

    The ground-truth mask is the liver region (inclusions included, fluid
    pocket excluded).
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(spec.seed)))
    dims = np.asarray(spec.dims, dtype=np.float64)
    scale = float(min(spec.dims)) / _REFERENCE_DIM

    center = dims / 2.0 + rng.uniform(-0.03, 0.03, size=3) * dims
    semi_axes = rng.uniform(0.26, 0.33, size=3) * dims
    exponent = float(rng.uniform(2.0, 3.5))
    liver = _superellipsoid_mask(spec.dims, center, semi_axes, exponent)

    hu = np.full(spec.dims, _HU_BACKGROUND, dtype=np.float64)
    hu[liver] = spec.parenchyma_hu

    if spec.kind == PLD:
        count = int(rng.integers(spec.cyst_count_range[0], spec.cyst_count_range[1] + 1))
        _place_inclusions(rng, hu, liver, count, _CYST_RADIUS, scale, spec.cyst_hu)
    else:
        count = int(rng.integers(spec.lesion_count_range[0], spec.lesion_count_range[1] + 1))
        _place_inclusions(rng, hu, liver, count, _LESION_RADIUS, scale, spec.lesion_hu)

    _place_fluid_pocket(rng, hu, liver, center, semi_axes, exponent, scale, spec.cyst_hu)

    if spec.noise_sd > 0:
        hu = hu + rng.normal(0.0, spec.noise_sd, size=spec.dims)
    voxels = np.clip(np.rint(hu), -32768, 32767).astype(np.int16)

    volume = Volume.hu(voxels, spec.spacing, spec.orientation)
    mask = Volume.mask(liver.astype(np.uint8), spec.spacing, spec.orientation)
    return ScanRecord(
        id=scan_id if scan_id is not None else f"{spec.kind}-{spec.seed}",
        volume=volume,
        truth_mask=mask,
        true_label=spec.kind,
    )


def cohort_specs(kind: str, count: int, base_seed: int, **overrides) -> list[tuple[str, PhantomSpec]]:
    """(id, spec) pairs for a cohort; per-scan seed is base_seed XOR index."""
    if count < 1:
        raise ValidationError(f"cohort count must be >= 1, got {count}")
    return [
        (f"{kind}-{index:03d}", PhantomSpec(kind=kind, seed=int(base_seed) ^ index, **overrides))
        for index in range(count)
    ]


def generate_records(kind: str, count: int, base_seed: int, **overrides) -> list[ScanRecord]:
    """In-memory cohort (no files)."""
    return [generate_phantom(spec, scan_id) for scan_id, spec in cohort_specs(kind, count, base_seed, **overrides)]


MANIFEST_NAME = "manifest.jsonl"


def generate_cohort(
    kind: str, count: int, base_seed: int, out_dir, **overrides
) -> list[ScanRecord]:
    """Generate a cohort and write SVOL files plus a JSON-lines manifest.

    Manifest paths are relative to the manifest's directory, so regenerated
    directories are byte-identical wherever they live.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as manifest:
        for scan_id, spec in cohort_specs(kind, count, base_seed, **overrides):
            rec = generate_phantom(spec, scan_id)
            vol_name = f"{scan_id}.svol"
            mask_name = f"{scan_id}.mask.svol"
            write_svol(rec.volume, out / vol_name)
            write_svol(rec.truth_mask, out / mask_name)
            manifest.write(
                json.dumps(
                    {"id": rec.id, "label": rec.true_label, "volume": vol_name, "mask": mask_name}
                )
                + "\n"
            )
            records.append(rec)
    return records


def load_manifest(paths: str | Path | Iterable[str | Path]) -> list[ScanRecord]:
    """Load scan records from one or more cohort manifests."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    records: list[ScanRecord] = []
    for path in paths:
        path = Path(path)
        base = path.parent
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            records.append(
                ScanRecord(
                    id=entry["id"],
                    volume=read_svol(base / entry["volume"]),
                    truth_mask=read_svol(base / entry["mask"]),
                    true_label=entry["label"],
                )
            )
    return records
