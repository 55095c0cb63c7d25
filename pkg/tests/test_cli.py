import json

import numpy as np
import pytest

from palpbench.materials import format_phantom, table_material, Phantom
from palpbench.session.cli import main


@pytest.fixture
def workbench(tmp_path):
    """Phantom doc + config file + data root, ready for CLI calls."""
    mats = [table_material("tpu"), table_material("pla5")]
    grid = np.zeros((12, 12), dtype=np.int64)
    grid[:, 6:] = 1
    phantom = Phantom(grid=grid, cell_size=1.0, materials=mats, origin=(90.0, 90.0), name="cli-two")
    phantom_path = tmp_path / "phantom.txt"
    phantom_path.write_text(format_phantom(phantom))
    config = {
        "phantom": "phantom.txt",
        "seed": 3,
        "depth_mm": 2.0,
        "force_limit_n": 45.0,
        "data_root": str(tmp_path / "data"),
    }
    config_path = tmp_path / "workbench.json"
    config_path.write_text(json.dumps(config))
    return tmp_path, config_path, config


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestCli:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("frobnicate")
        assert exc.value.code == 2

    def test_no_subcommand_usage(self, capsys):
        assert run_cli() == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_calibrate_writes_document(self, workbench, capsys):
        tmp_path, config_path, _ = workbench
        out = tmp_path / "calibration.json"
        assert run_cli("calibrate", "--config", config_path, "--out", out) == 0
        doc = json.loads(out.read_text())
        assert len(doc["rotation_row_major"]) == 9
        assert "residual" in capsys.readouterr().out

    def test_scan_train_eval_report_replay(self, workbench, capsys):
        tmp_path, config_path, config = workbench
        # two small rasters, one per material column
        assert run_cli(
            "scan", "raster", "--config", config_path, "--session", "left",
            "--origin", 91.0, 91.0, "--nx", 4, "--ny", 4, "--step", 1.0,
        ) == 0
        assert run_cli(
            "scan", "raster", "--config", config_path, "--session", "right",
            "--origin", 97.0, 91.0, "--nx", 4, "--ny", 4, "--step", 1.0,
        ) == 0
        model_path = tmp_path / "svm.json"
        assert run_cli(
            "train", "svm", "--config", config_path, "--sessions", "left", "right",
            "--sensors", "all", "--out", model_path,
        ) == 0
        assert model_path.exists()
        assert model_path.with_suffix(".confusion.png").exists()
        out = capsys.readouterr().out
        assert "test accuracy" in out

        assert run_cli(
            "eval", "--config", config_path, "--model", model_path,
            "--sessions", "left",
        ) == 0
        out = capsys.readouterr().out
        assert "accuracy" in out

        report_dir = tmp_path / "report"
        assert run_cli(
            "report", "--config", config_path, "--session", "left",
            "--out-dir", report_dir,
        ) == 0
        summary = (report_dir / "summary.txt").read_text()
        assert "stiffness by material" in summary
        assert "tpu" in summary
        assert "assumptions" in summary
        assert (report_dir / "pca_all.png").exists()
        assert (report_dir / "pca_force.png").exists()

        assert run_cli("replay", "--config", config_path, "--session", "left") == 0
        assert "byte-identical" in capsys.readouterr().out

    def test_classified_scan_prints_predictions(self, workbench, capsys):
        tmp_path, config_path, config = workbench
        for sid, x0 in (("tr-a", 91.0), ("tr-b", 97.0)):
            run_cli("scan", "raster", "--config", config_path, "--session", sid,
                    "--origin", x0, 91.0, "--nx", 3, "--ny", 3, "--step", 1.0)
        model_path = tmp_path / "mlp.json"
        capsys.readouterr()
        assert run_cli(
            "train", "mlp", "--config", config_path, "--sessions", "tr-a", "tr-b",
            "--out", model_path, "--epochs", 150,
        ) == 0
        # wire the model into the config and scan with live classification
        config["model"] = str(model_path)
        config_path.write_text(json.dumps(config))
        capsys.readouterr()
        assert run_cli(
            "scan", "raster", "--config", config_path, "--session", "classified",
            "--origin", 92.0, 92.0, "--nx", 2, "--ny", 2, "--step", 1.0,
        ) == 0
        out = capsys.readouterr().out
        assert "-> tpu" in out or "-> pla5" in out
        map_png = tmp_path / "data" / "classified" / "map.png"
        assert map_png.exists()
