"""Command-line interface: exit codes, artifacts, and determinism."""

import os
import subprocess

import pytest

from semcodec.cli import main

TINY = [
    "--set", "data.n_samples=64",
    "--set", "task.epochs=1",
    "--set", "train.stage1_epochs=1",
    "--set", "train.stage2_epochs=1",
    "--set", "eval.reps=1",
    "--set", "eval.ber_grid=[0.05]",
]


def test_console_script_version():
    out = subprocess.run(["semcodec", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("semcodec ")


def test_gen_data_deterministic(tmp_path):
    d1, d2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["gen-data", "--n", "64", "--out", d1]) == 0
    assert main(["gen-data", "--n", "64", "--out", d2]) == 0
    for rel in ("images.npy", "labels.npy", "manifest.json"):
        with open(os.path.join(d1, rel), "rb") as f:
            a = f.read()
        with open(os.path.join(d2, rel), "rb") as f:
            b = f.read()
        assert a == b, rel


def test_gen_data_rejects_nonpositive_n(tmp_path, capsys):
    assert main(["gen-data", "--n", "0", "--out", str(tmp_path / "x")]) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_key_names_it(capsys):
    assert main(["channel-demo", "--set", "berr=0.1"]) == 2
    assert "berr" in capsys.readouterr().err


def test_channel_demo(capsys):
    assert main(["channel-demo"]) == 0
    out = capsys.readouterr().out
    assert "flips" in out and "corrupted symbols" in out


def test_huffman_demo(capsys):
    assert main(["huffman-demo"]) == 0
    out = capsys.readouterr().out
    assert "match rate" in out and "symbol 0:" in out


def test_run_preset_writes_artifacts(tmp_path, capsys):
    out = str(tmp_path / "hvf")
    assert main(["run-preset", "huffman-vs-fixed", "--out", out, "--seeds", "0"]) == 0
    assert os.path.isfile(os.path.join(out, "metrics.csv"))
    assert "direction_ok" in capsys.readouterr().out


def test_run_preset_unknown_name():
    with pytest.raises(SystemExit) as err:
        main(["run-preset", "warpdrive", "--out", "/tmp/x"])
    assert err.value.code == 2


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_divergence_exit_code(tmp_path, capsys):
    code = main(["train-stage1", "--out", str(tmp_path / "run"),
                 *TINY, "--set", "train.lr=1e80"])
    assert code == 3
    assert "divergence" in capsys.readouterr().err


def test_missing_checkpoint_exit_code(tmp_path, capsys):
    code = main(["eval", "--ckpt", str(tmp_path / "no.ckpt"),
                 "--out", str(tmp_path / "run"), *TINY])
    assert code == 4
    assert "io error" in capsys.readouterr().err


def test_train_stage1_run_dir(tmp_path, capsys):
    out = str(tmp_path / "s1")
    assert main(["train-stage1", "--out", out, *TINY]) == 0
    for rel in ("config.txt", "metrics.csv", "codec.ckpt"):
        assert os.path.isfile(os.path.join(out, rel)), rel
    assert "held-out mse" in capsys.readouterr().out


def test_sweep_writes_arm_column(tmp_path, capsys):
    out = str(tmp_path / "sw")
    code = main(["sweep", "--key", "loss.alpha", "--values", "0.0,2.0",
                 "--out", out, *TINY])
    assert code == 0
    header = open(os.path.join(out, "metrics.csv")).readline()
    assert header.startswith("arm,")
    assert "loss.alpha=0.0" in capsys.readouterr().out


def test_output_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("SEMCODEC_OUT", str(tmp_path / "root"))
    assert main(["gen-data", "--n", "8"]) == 0
    assert os.path.isfile(str(tmp_path / "root" / "dataset" / "images.npy"))
