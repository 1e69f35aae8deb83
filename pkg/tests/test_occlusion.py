import numpy as np
import pytest

from segroute.errors import ValidationError
from segroute.models import ClassScores
from segroute.occlusion import OcclusionSpec, anchor_rows_to_csv, occlusion_map, occlusion_scan

from conftest import random_volume, real_volume


class ConstantClassifier:
    def classify(self, v, record=None):
        return ClassScores({"pos": 0.6, "neg": 0.4})


class VoxelProbeClassifier:
    """Positive probability equals the value of one probe voxel."""

    def __init__(self, index):
        self.index = tuple(index)

    def classify(self, v, record=None):
        p = float(v.data[self.index])
        return ClassScores({"pos": p, "neg": 1.0 - p})


class TestOcclusionMap:
    def test_constant_classifier_gives_zero_map(self, rng):
        v = random_volume(rng, (8, 8, 8))
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(4, 4, 4), target_class="pos")
        out = occlusion_map(ConstantClassifier(), v, spec)
        assert not out.data.any()

    def test_probe_voxel_support(self, rng):
        v = random_volume(rng, (8, 8, 8))
        probe = (5, 2, 6)
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(4, 4, 4), fill_value=0.0, target_class="pos")
        out = occlusion_map(VoxelProbeClassifier(probe), v, spec)
        # non-overlapping 4^3 patches: nonzero exactly on the patch holding the probe
        expected = np.zeros((8, 8, 8), bool)
        block = tuple(slice(4 * (probe[a] // 4), 4 * (probe[a] // 4) + 4) for a in range(3))
        expected[block] = True
        assert np.array_equal(out.data != 0.0, expected)
        # each voxel of that patch is covered once; delta = value - fill
        assert out.data[block] == pytest.approx(float(v.data[probe]))

    def test_probe_linearity_in_fill_gap(self):
        data = np.zeros((8, 8, 8))
        probe = (1, 1, 1)
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(4, 4, 4), fill_value=0.1, target_class="pos")
        for value in (0.2, 0.4, 0.8):
            data[probe] = value
            out = occlusion_map(VoxelProbeClassifier(probe), real_volume(data.copy()), spec)
            assert out.data[probe] == pytest.approx(value - 0.1, abs=1e-12)

    def test_full_coverage_with_clipped_final_anchor(self, rng):
        # 10 with patch 4 stride 4 -> anchors 0, 4, 6 (final re-included)
        v = random_volume(rng, (10, 10, 10))
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(4, 4, 4), target_class="pos")
        out, rows = occlusion_scan(VoxelProbeClassifier((9, 9, 9)), v, spec)
        anchors = {r[0][0] for r in rows}
        assert anchors == {0, 4, 6}
        assert out.data[9, 9, 9] != 0.0

    def test_deterministic(self, rng):
        v = random_volume(rng, (8, 8, 8))
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(2, 2, 2), target_class="pos")
        a = occlusion_map(VoxelProbeClassifier((3, 3, 3)), v, spec)
        b = occlusion_map(VoxelProbeClassifier((3, 3, 3)), v, spec)
        assert np.array_equal(a.data, b.data)

    def test_geometry_preserved(self, rng):
        v = random_volume(rng, (8, 6, 9))
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(4, 4, 4), target_class="pos")
        out = occlusion_map(ConstantClassifier(), v, spec)
        assert out.same_geometry(v)

    def test_patch_larger_than_volume(self, rng):
        v = random_volume(rng, (4, 4, 4))
        with pytest.raises(ValidationError):
            occlusion_map(ConstantClassifier(), v, OcclusionSpec(patch_size=(8, 8, 8), target_class="pos"))

    def test_overlapping_patches_average(self):
        # with stride 2 < patch 4 interior voxels are covered by several
        # patches; a probe contributes (value - fill) per covering patch and
        # the map divides by the coverage count
        data = np.zeros((8, 8, 8))
        probe = (4, 4, 4)
        data[probe] = 1.0
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(2, 2, 2), fill_value=0.0, target_class="pos")
        out, rows = occlusion_scan(VoxelProbeClassifier(probe), real_volume(data), spec)
        covering = [r for r in rows if all(r[0][a] <= probe[a] < r[0][a] + 4 for a in range(3))]
        assert all(r[1] == pytest.approx(1.0) for r in covering)
        assert out.data[probe] == pytest.approx(1.0)

    def test_anchor_csv_shape(self, rng):
        v = random_volume(rng, (8, 8, 8))
        spec = OcclusionSpec(patch_size=(4, 4, 4), stride=(4, 4, 4), target_class="pos")
        _, rows = occlusion_scan(ConstantClassifier(), v, spec)
        text = anchor_rows_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "i,j,k,delta"
        assert len(lines) == 1 + 8
