"""Command-line surface: subcommands, artifacts, and exit codes."""

import csv
import json
import subprocess
import sys

import pytest

import sspvideo.training
from sspvideo.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_OK, main
from sspvideo.errors import NumericError

TINY = dict(
    n_classes=2, samples_per_class=5, frames=2, channels=1, height=8, width=8,
    patch_h=4, patch_w=4, d_model=8, d_state=4, n_layers=2,
    d_ifg=4, d_ifs=4, n_ifs=1,
    epochs=2, batch_size=4, peak_lr=3e-3, warmup_epochs=1, weight_decay=0.01,
)


def write_config(directory, **extra):
    doc = dict(TINY)
    doc["data_dir"] = str(directory / "data")
    doc["out"] = str(directory / "run")
    doc.update(extra)
    path = directory / "config.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One gen + train shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root)
    assert main(["gen", "--config", str(cfg)]) == EXIT_OK
    assert main(["train", "--config", str(cfg)]) == EXIT_OK
    return root, cfg


class TestGen:
    def test_writes_dataset_and_reports_hash(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["gen", "--config", str(cfg)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "dataset: 10 samples (2 classes x 5)" in out
        assert "index sha256" in out
        assert (tmp_path / "data" / "index.csv").is_file()

    def test_out_flag_overrides_data_dir(self, tmp_path):
        cfg = write_config(tmp_path)
        other = tmp_path / "elsewhere"
        assert main(["gen", "--config", str(cfg), "--out", str(other)]) == EXIT_OK
        assert (other / "index.csv").is_file()

    def test_deterministic_and_seed_sensitive(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b, c = (tmp_path / name for name in "abc")
        main(["gen", "--config", str(cfg), "--out", str(a)])
        main(["gen", "--config", str(cfg), "--out", str(b)])
        main(["gen", "--config", str(cfg), "--out", str(c), "--seed", "1"])
        assert (a / "index.csv").read_bytes() == (b / "index.csv").read_bytes()
        assert (a / "index.csv").read_bytes() != (c / "index.csv").read_bytes()


class TestTrain:
    def test_run_directory_contents(self, pipeline):
        root, _ = pipeline
        run = root / "run"
        assert (run / "config.json").is_file()
        assert (run / "metrics.csv").is_file()
        assert (run / "checkpoints" / "best" / "manifest.tsv").is_file()
        assert (run / "checkpoints" / "final" / "manifest.tsv").is_file()
        report = json.loads((run / "frozen_report.json").read_text())
        assert report["intact"] is True

    def test_prints_best_and_freeze_status(self, pipeline, capsys):
        root, cfg = pipeline
        run2 = root / "run2"
        assert main(["train", "--config", str(cfg), "--out", str(run2),
                     "--policy", "head_only"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "best val top1" in out
        assert "frozen backbone hashes: unchanged" in out
        saved = json.loads((run2 / "config.json").read_text())
        assert saved["policy"] == "head_only"

    def test_missing_dataset_exits_4(self, tmp_path, capsys):
        cfg = write_config(tmp_path)  # no gen ran
        assert main(["train", "--config", str(cfg)]) == EXIT_MISSING
        assert "missing artifact" in capsys.readouterr().err

    def test_numeric_abort_exits_3(self, pipeline, monkeypatch, capsys):
        root, cfg = pipeline

        def explode(*a, **kw):
            raise NumericError("synthetic divergence")

        monkeypatch.setattr(sspvideo.training, "train", explode)
        assert main(["train", "--config", str(cfg),
                     "--out", str(root / "run3")]) == EXIT_NUMERIC
        assert "numeric abort" in capsys.readouterr().err


class TestEval:
    def test_reports_val_metrics(self, pipeline, capsys):
        _, cfg = pipeline
        assert main(["eval", "--config", str(cfg)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "val loss" in out and "top1" in out

    def test_missing_run_exits_4(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg)]) == EXIT_MISSING


class TestConfigErrors:
    def test_unknown_key_exits_2(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"n_clases": 2}))
        assert main(["gen", "--config", str(path)]) == EXIT_CONFIG
        assert "n_clases" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{broken")
        assert main(["gen", "--config", str(path)]) == EXIT_CONFIG

    def test_bad_field_value_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, height=15)
        assert main(["gen", "--config", str(cfg)]) == EXIT_CONFIG


class TestAnalyze:
    def test_paths_export(self, pipeline, capsys):
        root, cfg = pipeline
        assert main(["analyze", "--out", str(root / "run"), "--paths"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "scan-only graph diameter" in out
        assert (root / "run" / "exports" / "paths.csv").is_file()

    def test_gates_export(self, pipeline):
        root, _ = pipeline
        assert main(["analyze", "--out", str(root / "run"), "--gates"]) == EXIT_OK
        exports = root / "run" / "exports"
        for layer in range(TINY["n_layers"]):
            assert (exports / f"gates_layer{layer}.csv").is_file()
            assert (exports / f"layer{layer}_prompts.csv").is_file()

    def test_decay_export(self, pipeline):
        root, _ = pipeline
        assert main(["analyze", "--out", str(root / "run"), "--decay"]) == EXIT_OK
        exports = root / "run" / "exports"
        d_inner = 2 * TINY["d_model"]
        written = list(exports.glob("decay_layer*_ch*.csv"))
        assert len(written) == TINY["n_layers"] * d_inner

    def test_no_flags_says_so(self, pipeline, capsys):
        root, _ = pipeline
        assert main(["analyze", "--out", str(root / "run")]) == EXIT_OK
        assert "nothing to do" in capsys.readouterr().out

    def test_missing_checkpoint_exits_4(self, tmp_path):
        assert main(["analyze", "--out", str(tmp_path), "--paths"]) == EXIT_MISSING


class TestAblate:
    def test_grid_tables(self, pipeline, capsys, tmp_path):
        root, _ = pipeline
        cfg = write_config(tmp_path, epochs=1,
                           data_dir=str(root / "data"), out=str(tmp_path / "ablate"))
        assert main(["ablate", "--config", str(cfg)]) == EXIT_OK
        table = tmp_path / "ablate" / "ablation.csv"
        summary = tmp_path / "ablate" / "ablation_summary.csv"
        with open(table) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8 * 3  # 8 arms x 3 seeds
        assert all(0.0 <= float(r["val_top1"]) <= 1.0 for r in rows)
        with open(summary) as fh:
            arms = [r["arm"] for r in csv.DictReader(fh)]
        assert arms == ["ifg+ifs", "ifg_only", "ifs_only", "neither",
                        "gates_both", "entropy_only", "variance_only",
                        "gates_neither"]
        printed = capsys.readouterr().out
        assert "ifg+ifs" in printed


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "sspvideo", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "gen" in proc.stdout and "ablate" in proc.stdout

    def test_console_script(self):
        proc = subprocess.run(["sspvideo", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "analyze" in proc.stdout
