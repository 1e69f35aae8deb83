"""Model-agnostic occlusion sensitivity maps.

Slide a fill-value patch over the volume on a stride grid and record how much
the target-class probability drops when each patch is occluded.  Positive map
values mark regions that support the prediction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import PayloadTypeError, ValidationError
from .models import Classifier
from .volume import PayloadKind, Volume


@dataclass(frozen=True)
class OcclusionSpec:
    patch_size: tuple[int, int, int] = (16, 16, 16)
    stride: tuple[int, int, int] = (8, 8, 8)
    fill_value: float = 0.0
    target_class: str = "PLD"

    def __post_init__(self):
        patch = tuple(int(p) for p in self.patch_size)
        stride = tuple(int(s) for s in self.stride)
        if len(patch) != 3 or any(p < 1 for p in patch):
            raise ValidationError(f"patch size must be three positive ints, got {self.patch_size}")
        if len(stride) != 3 or any(s < 1 for s in stride):
            raise ValidationError(f"stride must be three positive ints, got {self.stride}")
        object.__setattr__(self, "patch_size", patch)
        object.__setattr__(self, "stride", stride)


def _axis_anchors(dim: int, patch: int, stride: int) -> list[int]:
    # Clip anchors so patches stay in bounds; always include the final one so
    # every voxel is covered at least once.
    anchors = list(range(0, dim - patch + 1, stride))
    if anchors[-1] != dim - patch:
        anchors.append(dim - patch)
    return anchors


def occlusion_scan(
    classifier: Classifier, v: Volume, spec: OcclusionSpec
) -> tuple[Volume, list[tuple[tuple[int, int, int], float]]]:
    """Occlusion map plus the per-anchor probability drops.

    For each patch anchor, delta = p_target(v) - p_target(v with the patch
    overwritten by fill_value).  The map averages delta over every patch
    covering each voxel.  Anchors are visited in a fixed lexicographic order,
    so output is deterministic.
    """
    if v.kind is not PayloadKind.REAL:
        raise PayloadTypeError(f"occlusion requires a REAL payload, got {v.kind.name}")
    if any(p > d for p, d in zip(spec.patch_size, v.dims)):
        raise ValidationError(f"patch {spec.patch_size} larger than volume {v.dims}")

    baseline = classifier.classify(v)[spec.target_class]
    anchors = [
        _axis_anchors(v.dims[a], spec.patch_size[a], spec.stride[a]) for a in range(3)
    ]

    delta_sum = np.zeros(v.dims, dtype=np.float64)
    coverage = np.zeros(v.dims, dtype=np.int64)
    work = v.data.copy()
    occluded = Volume(v.dims, v.spacing, v.orientation, PayloadKind.REAL, work)
    rows: list[tuple[tuple[int, int, int], float]] = []
    for anchor in itertools.product(*anchors):
        region = tuple(
            slice(anchor[a], anchor[a] + spec.patch_size[a]) for a in range(3)
        )
        saved = work[region].copy()
        work[region] = spec.fill_value
        delta = baseline - classifier.classify(occluded)[spec.target_class]
        work[region] = saved
        delta_sum[region] += delta
        coverage[region] += 1
        rows.append((anchor, float(delta)))

    assert coverage.min() >= 1
    sensitivity = delta_sum / coverage
    return v.with_data(sensitivity, PayloadKind.REAL), rows


def occlusion_map(classifier: Classifier, v: Volume, spec: OcclusionSpec) -> Volume:
    """Occlusion sensitivity map with the same geometry as the input."""
    return occlusion_scan(classifier, v, spec)[0]


def anchor_rows_to_csv(rows: list[tuple[tuple[int, int, int], float]]) -> str:
    """Companion plot data: one (anchor, delta) row per evaluated patch."""
    lines = ["i,j,k,delta"]
    for (i, j, k), delta in rows:
        lines.append(f"{i},{j},{k},{delta:.12g}")
    return "\n".join(lines) + "\n"
