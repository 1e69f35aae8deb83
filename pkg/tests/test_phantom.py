import numpy as np
import pytest
from scipy import ndimage

from segroute.errors import ValidationError
from segroute.phantom import (
    MANIFEST_NAME,
    PhantomSpec,
    cohort_specs,
    generate_cohort,
    generate_phantom,
    generate_records,
    load_manifest,
)


class TestGeneratePhantom:
    def test_deterministic(self):
        spec = PhantomSpec(kind="PLD", seed=42)
        a = generate_phantom(spec, "x")
        b = generate_phantom(spec, "x")
        assert a.volume.equals(b.volume)
        assert a.truth_mask.equals(b.truth_mask)

    def test_mask_nonempty_and_inside_bounds(self):
        for kind, seed in (("PLD", 1), ("MCC", 2), ("PLD", 3)):
            rec = generate_phantom(PhantomSpec(kind=kind, seed=seed), "x")
            mask = rec.truth_mask.data.astype(bool)
            assert mask.any()
            assert not mask[0].any() and not mask[-1].any()
            assert not mask[:, 0].any() and not mask[:, -1].any()
            assert not mask[:, :, 0].any() and not mask[:, :, -1].any()

    def test_noiseless_no_inclusion_parenchyma_exact(self):
        spec = PhantomSpec(
            kind="PLD", seed=5, noise_sd=0.0, cyst_count_range=(0, 0), dims=(48, 48, 48)
        )
        rec = generate_phantom(spec, "x")
        inside = rec.volume.data[rec.truth_mask.data.astype(bool)]
        assert (inside == 60).all()

    def test_label_matches_kind(self):
        assert generate_phantom(PhantomSpec(kind="MCC", seed=0), "x").true_label == "MCC"

    def test_mask_single_6_connected_component(self):
        structure = ndimage.generate_binary_structure(3, 1)
        for kind in ("PLD", "MCC"):
            for seed in range(8):
                rec = generate_phantom(PhantomSpec(kind=kind, seed=seed, dims=(64, 64, 64)), "x")
                _, n = ndimage.label(rec.truth_mask.data, structure=structure)
                assert n == 1

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            PhantomSpec(kind="XYZ")
        with pytest.raises(ValidationError):
            PhantomSpec(kind="PLD", dims=(8, 32, 32))
        with pytest.raises(ValidationError):
            PhantomSpec(kind="PLD", noise_sd=-1)
        with pytest.raises(ValidationError):
            PhantomSpec(kind="PLD", cyst_count_range=(5, 2))

    def test_pld_volume_contains_fluid_band(self):
        rec = generate_phantom(PhantomSpec(kind="PLD", seed=9, noise_sd=0.0), "x")
        inside = rec.volume.data[rec.truth_mask.data.astype(bool)]
        assert (inside == 5).sum() > 100  # cysts present at cyst HU


class TestCohorts:
    def test_per_scan_seed_is_xor(self):
        specs = cohort_specs("PLD", 4, base_seed=0b1100)
        assert [s.seed for _, s in specs] == [0b1100, 0b1101, 0b1110, 0b1111]
        assert [sid for sid, _ in specs] == ["PLD-000", "PLD-001", "PLD-002", "PLD-003"]

    def test_distinct_volumes(self):
        records = generate_records("MCC", 5, 77, dims=(48, 48, 48))
        assert len({r.id for r in records}) == 5
        raw = [r.volume.data.tobytes() for r in records]
        assert len(set(raw)) == 5

    def test_cyst_cohort_mean_below_zero_cyst_cohort(self):
        cysty = generate_records("PLD", 20, 123, dims=(48, 48, 48), noise_sd=0.0)
        plain = generate_records(
            "PLD", 20, 123, dims=(48, 48, 48), noise_sd=0.0, cyst_count_range=(0, 0)
        )
        mean_with = np.mean(
            [r.volume.data[r.truth_mask.data.astype(bool)].mean() for r in cysty]
        )
        mean_without = np.mean(
            [r.volume.data[r.truth_mask.data.astype(bool)].mean() for r in plain]
        )
        assert mean_with < mean_without
        assert mean_without == pytest.approx(60.0, abs=1e-9)

    def test_cohort_files_byte_identical_on_regeneration(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        generate_cohort("PLD", 3, 7, out1, dims=(32, 32, 32))
        generate_cohort("PLD", 3, 7, out2, dims=(32, 32, 32))
        files1 = sorted(p.name for p in out1.iterdir())
        files2 = sorted(p.name for p in out2.iterdir())
        assert files1 == files2
        for name in files1:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        written = generate_cohort("MCC", 3, 11, tmp_path / "c", dims=(32, 32, 32))
        records = load_manifest(tmp_path / "c" / MANIFEST_NAME)
        assert [r.id for r in records] == [r.id for r in written]
        for loaded, orig in zip(records, written):
            assert loaded.true_label == orig.true_label
            assert loaded.volume.equals(orig.volume)
            assert loaded.truth_mask.equals(orig.truth_mask)

    def test_load_multiple_manifests(self, tmp_path):
        generate_cohort("PLD", 2, 1, tmp_path / "p", dims=(32, 32, 32))
        generate_cohort("MCC", 2, 2, tmp_path / "m", dims=(32, 32, 32))
        records = load_manifest([tmp_path / "p" / MANIFEST_NAME, tmp_path / "m" / MANIFEST_NAME])
        assert sorted({r.true_label for r in records}) == ["MCC", "PLD"]
        assert len(records) == 4

    def test_count_must_be_positive(self, tmp_path):
        with pytest.raises(ValidationError):
            generate_cohort("PLD", 0, 1, tmp_path / "x")
