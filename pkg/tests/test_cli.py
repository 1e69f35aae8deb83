import json
from pathlib import Path

import pytest

from segroute.cli import cli_dispatch
from segroute.phantom import MANIFEST_NAME, generate_cohort
from segroute.volume import read_svol

FIXTURES = Path(__file__).parent / "fixtures"


def run_cli(*argv):
    return cli_dispatch([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    generate_cohort("PLD", 3, 50, root / "pld", dims=(48, 48, 48))
    generate_cohort("MCC", 3, 60, root / "mcc", dims=(48, 48, 48))
    return root


def write_config(path, dataset, extra=None):
    config = {
        "manifest": [
            str(dataset / "pld" / MANIFEST_NAME),
            str(dataset / "mcc" / MANIFEST_NAME),
        ],
        "classifier": {"kind": "oracle", "labels": ["PLD", "MCC"]},
        "segmenters": {
            "PLD": {"kind": "reference", "name": "PLD"},
            "MCC": {"kind": "reference", "name": "MCC"},
        },
        "generic_segmenter": {"kind": "reference", "name": "generic"},
        "alpha": 0.05,
        "window": {"level": 180.0, "width": 440.0},
    }
    config.update(extra or {})
    path.write_text(json.dumps(config))
    return path


class TestPhantomGen:
    def test_deterministic_directories(self, tmp_path):
        assert run_cli("phantom-gen", "--kind", "PLD", "--count", 2, "--seed", 7,
                       "--out", tmp_path / "a", "--dims", "32") == 0
        assert run_cli("phantom-gen", "--kind", "PLD", "--count", 2, "--seed", 7,
                       "--out", tmp_path / "b", "--dims", "32") == 0
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SEGROUTE_SEED", "7")
        assert run_cli("phantom-gen", "--kind", "PLD", "--count", 1,
                       "--out", tmp_path / "env", "--dims", "32") == 0
        monkeypatch.delenv("SEGROUTE_SEED")
        assert run_cli("phantom-gen", "--kind", "PLD", "--count", 1, "--seed", 7,
                       "--out", tmp_path / "flag", "--dims", "32") == 0
        a = (tmp_path / "env" / "PLD-000.svol").read_bytes()
        b = (tmp_path / "flag" / "PLD-000.svol").read_bytes()
        assert a == b


class TestRun:
    def test_adaptive_oracle_equals_optimal(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", dataset)
        assert run_cli("run", "--mode", "optimal", "--config", cfg, "--out", tmp_path / "opt.csv") == 0
        assert run_cli("run", "--mode", "adaptive", "--config", cfg, "--out", tmp_path / "ada.csv") == 0
        assert (tmp_path / "opt.csv").read_bytes() == (tmp_path / "ada.csv").read_bytes()

    def test_generic_run_and_jsonl_mirror(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", dataset)
        out = tmp_path / "gen.csv"
        assert run_cli("run", "--mode", "generic", "--config", cfg, "--out", out) == 0
        rows = [json.loads(line) for line in out.with_suffix(".jsonl").read_text().splitlines()]
        assert len(rows) == 6
        assert all(r["category"].endswith("->generic") for r in rows)
        assert all(r["error"] is None for r in rows)

    def test_jobs_flag_identical_output(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", dataset)
        assert run_cli("run", "--mode", "optimal", "--config", cfg, "--out", tmp_path / "j1.csv", "--jobs", 1) == 0
        assert run_cli("run", "--mode", "optimal", "--config", cfg, "--out", tmp_path / "j4.csv", "--jobs", 4) == 0
        assert (tmp_path / "j1.csv").read_bytes() == (tmp_path / "j4.csv").read_bytes()

    def test_missing_route_gives_nonzero_exit(self, dataset, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", dataset,
            extra={"segmenters": {"PLD": {"kind": "reference", "name": "PLD"}}},
        )
        assert run_cli("run", "--mode", "adaptive", "--config", cfg, "--out", tmp_path / "r.csv") == 1
        assert "RoutingError" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("run", "--mode", "optimal", "--config", bad, "--out", tmp_path / "r.csv") == 1


class TestCompare:
    def test_golden_report(self, tmp_path):
        out = tmp_path / "report.csv"
        assert run_cli("compare", "--a", FIXTURES / "results_a.csv",
                       "--b", FIXTURES / "results_b.csv", "--out", out) == 0
        assert out.read_bytes() == (FIXTURES / "report_expected.csv").read_bytes()

    def test_id_mismatch_fails(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("id,true_label,predicted_label,category,dice\ns1,PLD,PLD,PLD->PLD,0.9\n")
        b.write_text("id,true_label,predicted_label,category,dice\ns2,PLD,PLD,PLD->PLD,0.9\n")
        assert run_cli("compare", "--a", a, "--b", b, "--out", tmp_path / "r.csv") == 1


class TestOcclusionCommand:
    def test_export_map_and_csv(self, dataset, tmp_path):
        manifest = dataset / "pld" / MANIFEST_NAME
        entry = json.loads(manifest.read_text().splitlines()[0])
        volume_path = dataset / "pld" / entry["volume"]

        model_path = tmp_path / "model.json"
        assert run_cli(
            "train", "--manifest", dataset / "pld" / MANIFEST_NAME,
            "--manifest", dataset / "mcc" / MANIFEST_NAME,
            "--class-weight", "PLD=4", "--class-weight", "MCC=1",
            "--epochs", 50, "--lr", 0.1, "--out", model_path,
        ) == 0

        out_map = tmp_path / "map.svol"
        out_csv = tmp_path / "anchors.csv"
        assert run_cli("occlusion", "--model", model_path, "--volume", volume_path,
                       "--patch", 64, "--stride", 64, "--target", "PLD",
                       "--out", out_map, "--csv", out_csv) == 0
        sensitivity = read_svol(out_map)
        assert sensitivity.dims == (128, 128, 128)
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "i,j,k,delta"
        assert len(lines) == 1 + 8  # 2 anchors per axis at patch 64 stride 64


class TestReport:
    def test_summary_shape(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", dataset)
        results = tmp_path / "res.csv"
        assert run_cli("run", "--mode", "optimal", "--config", cfg, "--out", results) == 0
        out = tmp_path / "summary.json"
        assert run_cli("report", "--results", results, "--out", out) == 0
        summary = json.loads(out.read_text())
        assert summary["overall"]["n"] == 6
        assert set(summary["groups"]) == {"PLD->PLD", "MCC->MCC"}
        for stats in [summary["overall"], *summary["groups"].values()]:
            assert stats["min"] <= stats["q1"] <= stats["median"] <= stats["q3"] <= stats["max"]
            assert stats["whisker_lo"] >= stats["q1"] - 1.5 * (stats["q3"] - stats["q1"]) - 1e-12
            assert stats["whisker_hi"] <= stats["q3"] + 1.5 * (stats["q3"] - stats["q1"]) + 1e-12

    def test_outlier_detection(self, tmp_path):
        rows = ["id,true_label,predicted_label,category,dice"]
        values = [0.95, 0.96, 0.955, 0.965, 0.958, 0.962, 0.40]
        for i, v in enumerate(values):
            rows.append(f"s{i},PLD,PLD,PLD->PLD,{v:.6f}")
        results = tmp_path / "res.csv"
        results.write_text("\n".join(rows) + "\n")
        out = tmp_path / "summary.json"
        assert run_cli("report", "--results", results, "--out", out) == 0
        summary = json.loads(out.read_text())
        assert summary["overall"]["outliers"] == [0.4]
        assert summary["overall"]["whisker_lo"] == 0.95
