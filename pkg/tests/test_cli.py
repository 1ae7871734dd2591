import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from kftser import Manifest, init_model, load_checkpoint, save_checkpoint
from kftser.cli import main


@pytest.fixture(scope="module")
def cli_ws(tmp_path_factory):
    """End-to-end CLI run: synth -> extract -> train, shared read-only."""
    root = tmp_path_factory.mktemp("cli_ws")
    paths = {
        "root": root,
        "audio": root / "audio",
        "manifest": root / "manifest.json",
        "features": root / "features",
        "ckpt": root / "model.ckpt",
    }
    assert main(["synth", "--out-dir", str(paths["audio"]), "--out", str(paths["manifest"]),
                 "--per-class", "4", "--seed", "3", "--test-fraction", "0.25"]) == 0
    assert main(["extract", str(paths["manifest"]), "--out-dir", str(paths["features"])]) == 0
    assert main(["train", str(paths["manifest"]), "--features", str(paths["features"]),
                 "--out", str(paths["ckpt"]), "--epochs", "12", "--seed", "3"]) == 0
    return paths


class TestSynthAndManifest:
    def test_synth_reports_files_and_split(self, tmp_path, capsys):
        out = tmp_path / "m.json"
        rc = main(["synth", "--out-dir", str(tmp_path / "a"), "--out", str(out),
                   "--per-class", "2", "--seed", "1", "--test-fraction", "0.5"])
        assert rc == 0
        assert f"8 files under {tmp_path / 'a'}" in capsys.readouterr().out
        m = Manifest.load(out)
        assert len(m.records) == 8
        assert len(m.test_indices) == 4
        assert not set(m.test_indices) & set(m.train_indices)

    def test_manifest_scans_and_splits(self, cli_ws, tmp_path, capsys):
        out = tmp_path / "m2.json"
        rc = main(["manifest", str(cli_ws["audio"]), "--out", str(out),
                   "--test-fraction", "0.25", "--seed", "5"])
        assert rc == 0
        assert "16 records (train=12/test=4)" in capsys.readouterr().out
        assert out.is_file()

    def test_manifest_missing_directory_is_a_runtime_error(self, tmp_path, capsys):
        rc = main(["manifest", str(tmp_path / "nope"), "--out", str(tmp_path / "m.json")])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_bad_fraction_is_an_argument_error(self, cli_ws, tmp_path, capsys):
        rc = main(["manifest", str(cli_ws["audio"]), "--out", str(tmp_path / "m.json"),
                   "--test-fraction", "1.5"])
        assert rc == 2
        assert "test_fraction" in capsys.readouterr().err

    def test_unknown_subcommand_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestExtract:
    def test_prints_per_class_frame_counts(self, cli_ws, tmp_path, capsys):
        out_dir = tmp_path / "feats"
        rc = main(["extract", str(cli_ws["manifest"]), "--out-dir", str(out_dir)])
        assert rc == 0
        out = capsys.readouterr().out
        for name in ("angry", "calm", "happy", "sad"):
            line = next(l for l in out.splitlines() if l.startswith(f"{name}: "))
            assert int(line.split()[1]) > 0
        assert "16 feature files written" in out
        assert len(list(out_dir.glob("*.feat"))) == 16

    def test_rerun_is_byte_identical(self, cli_ws, tmp_path):
        out_dir = tmp_path / "feats"
        assert main(["extract", str(cli_ws["manifest"]), "--out-dir", str(out_dir)]) == 0
        a = (cli_ws["features"] / "00000.feat").read_bytes()
        b = (out_dir / "00000.feat").read_bytes()
        assert a == b

    def test_missing_audio_fails_and_cleans_up(self, cli_ws, tmp_path, capsys):
        raw = json.loads(cli_ws["manifest"].read_text())
        raw["records"][-1]["file_path"] = str(tmp_path / "gone.wav")
        bad_manifest = tmp_path / "bad.json"
        bad_manifest.write_text(json.dumps(raw))
        out_dir = tmp_path / "feats"
        rc = main(["extract", str(bad_manifest), "--out-dir", str(out_dir)])
        assert rc == 1
        assert "gone.wav" in capsys.readouterr().err
        assert list(out_dir.glob("*.feat")) == []

    def test_unknown_config_key_is_an_argument_error(self, cli_ws, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"learning_rte": 0.01}')
        rc = main(["extract", str(cli_ws["manifest"]), "--out-dir", str(tmp_path / "f"),
                   "--config", str(cfg)])
        assert rc == 2
        assert "learning_rte" in capsys.readouterr().err


class TestTrain:
    def test_writes_checkpoint_and_trace(self, cli_ws, capsys):
        model = load_checkpoint(cli_ws["ckpt"])
        assert model.layer_dims == (41, 256, 128, 4)
        assert model.scaler is not None
        trace_path = cli_ws["root"] / "model.ckpt.trace.csv"
        assert trace_path.is_file()
        with open(trace_path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "loss", "frame_accuracy"]
        assert len(rows) == 13

    def test_zero_epochs_saves_the_initialized_model(self, cli_ws, tmp_path, capsys):
        out = tmp_path / "fresh.ckpt"
        rc = main(["train", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--out", str(out), "--epochs", "0"])
        assert rc == 0
        assert "epochs: 0 (checkpoint holds the initialized model)" in capsys.readouterr().out
        assert load_checkpoint(out).layer_dims == (41, 256, 128, 4)

    def test_same_seed_checkpoints_are_byte_identical(self, cli_ws, tmp_path):
        outs = [tmp_path / "a.ckpt", tmp_path / "b.ckpt"]
        for out in outs:
            assert main(["train", str(cli_ws["manifest"]), "--features",
                         str(cli_ws["features"]), "--out", str(out),
                         "--epochs", "4", "--seed", "17"]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_epochs_flag_overrides_config_file(self, cli_ws, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"epochs": 3}')
        rc = main(["train", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--out", str(tmp_path / "m.ckpt"), "--config", str(cfg),
                   "--epochs", "5"])
        assert rc == 0
        assert "epochs: 5," in capsys.readouterr().out

    def test_missing_features_dir_is_a_runtime_error(self, cli_ws, tmp_path, capsys):
        rc = main(["train", str(cli_ws["manifest"]), "--features", str(tmp_path / "void"),
                   "--out", str(tmp_path / "m.ckpt")])
        assert rc == 1
        assert "features missing" in capsys.readouterr().err


class TestEvaluate:
    def test_writes_all_three_reports(self, cli_ws, tmp_path, capsys):
        out_dir = tmp_path / "reports"
        rc = main(["evaluate", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--checkpoint", str(cli_ws["ckpt"]), "--out-dir", str(out_dir)])
        assert rc == 0
        out = capsys.readouterr().out
        report = json.loads((out_dir / "eval_report.json").read_text())
        gain = json.loads((out_dir / "gain_report.json").read_text())
        assert set(gain) == {"frame_level_accuracy", "utterance_level_accuracy",
                             "absolute_gain"}
        printed_acc = float(next(
            l for l in out.splitlines() if l.startswith("utterance accuracy:")
        ).split(":")[1])
        assert printed_acc == pytest.approx(report["accuracy"], abs=5e-5)
        assert printed_acc == pytest.approx(gain["utterance_level_accuracy"], abs=5e-5)
        header = (out_dir / "confusion.csv").read_text().splitlines()[0]
        assert header == "class,angry,calm,happy,sad"
        assert "utterances: 4" in out

    def test_missing_checkpoint_is_a_runtime_error(self, cli_ws, tmp_path, capsys):
        rc = main(["evaluate", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--checkpoint", str(tmp_path / "none.ckpt"),
                   "--out-dir", str(tmp_path / "r")])
        assert rc == 1

    def test_corrupt_checkpoint_is_a_runtime_error(self, cli_ws, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage" * 10)
        rc = main(["evaluate", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--checkpoint", str(bad), "--out-dir", str(tmp_path / "r")])
        assert rc == 1
        assert "magic" in capsys.readouterr().err

    def test_foreign_class_order_is_rejected(self, cli_ws, tmp_path, capsys):
        other = init_model((41, 8, 4), seed=0, class_order=("w", "x", "y", "z"))
        path = tmp_path / "other.ckpt"
        save_checkpoint(other, path)
        rc = main(["evaluate", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--checkpoint", str(path), "--out-dir", str(tmp_path / "r")])
        assert rc == 1
        assert "class order" in capsys.readouterr().err


class TestTrajectory:
    def test_csv_columns_and_simplex_rows(self, cli_ws, tmp_path, capsys):
        wav = sorted(cli_ws["audio"].glob("*.wav"))[0]
        out = tmp_path / "traj.csv"
        rc = main(["trajectory", str(wav), "--checkpoint", str(cli_ws["ckpt"]),
                   "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["frame_index", "z_angry", "z_calm", "z_happy", "z_sad",
                           "x_angry", "x_calm", "x_happy", "x_sad"]
        body = np.array([[float(v) for v in r] for r in rows[1:]])
        assert f"{len(body)} frames" in printed
        np.testing.assert_array_equal(body[:, 0], np.arange(len(body)))
        np.testing.assert_allclose(body[:, 1:5].sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(body[:, 5:9].sum(axis=1), 1.0, atol=1e-9)

    def test_filtering_does_not_add_label_switches(self, cli_ws, tmp_path):
        wav = sorted(cli_ws["audio"].glob("*.wav"))[-1]
        out = tmp_path / "traj.csv"
        assert main(["trajectory", str(wav), "--checkpoint", str(cli_ws["ckpt"]),
                     "--out", str(out)]) == 0
        body = np.loadtxt(out, delimiter=",", skiprows=1)
        raw_switches = np.count_nonzero(np.diff(body[:, 1:5].argmax(axis=1)))
        filt_switches = np.count_nonzero(np.diff(body[:, 5:9].argmax(axis=1)))
        assert filt_switches <= raw_switches

    def test_unreadable_audio_is_a_runtime_error(self, cli_ws, tmp_path, capsys):
        rc = main(["trajectory", str(tmp_path / "nope.wav"),
                   "--checkpoint", str(cli_ws["ckpt"]), "--out", str(tmp_path / "t.csv")])
        assert rc == 1


class TestTune:
    def test_writes_grid_results(self, cli_ws, tmp_path, capsys):
        out = tmp_path / "tune.json"
        rc = main(["tune", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--checkpoint", str(cli_ws["ckpt"]), "--grid", "0.001,0.1",
                   "--out", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["best_ratio"] in (0.001, 0.1)
        assert payload["best_q"] == pytest.approx(payload["best_ratio"] * 0.1)
        assert set(payload["accuracies"]) == {"0.001", "0.1"}
        assert "best ratio:" in capsys.readouterr().out

    def test_empty_grid_is_an_argument_error(self, cli_ws, tmp_path, capsys):
        rc = main(["tune", str(cli_ws["manifest"]), "--features", str(cli_ws["features"]),
                   "--checkpoint", str(cli_ws["ckpt"]), "--grid", ",",
                   "--out", str(tmp_path / "t.json")])
        assert rc == 2
        assert "grid is empty" in capsys.readouterr().err


class TestLoggingEnv:
    def test_unknown_log_level_warns_and_proceeds(self, cli_ws, tmp_path, capsys,
                                                  monkeypatch):
        monkeypatch.setenv("KFTSER_LOG", "verbose")
        rc = main(["manifest", str(cli_ws["audio"]), "--out", str(tmp_path / "m.json")])
        assert rc == 0
        assert "unknown KFTSER_LOG" in capsys.readouterr().err


def test_console_script_and_module_entry():
    for cmd in (["kftser", "--help"], [sys.executable, "-m", "kftser", "--help"]):
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0
        assert "manifest" in proc.stdout
