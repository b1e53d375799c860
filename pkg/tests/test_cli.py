import csv
import json

import numpy as np
import pytest

from divfuse.cli import main
from divfuse.data import load_manifest, write_feature_matrix

TINY_MODEL = ["--lstm-hidden", "6", "--proj-dim", "6", "--epochs", "3", "--batch-size", "8"]


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = main(["gen-synth", "--out", str(out), "--n-samples", "24", "--splits", "12", "6", "6",
                 "--t-visual", "18", "24", "--t-audio", "3", "5", "--seed", "4"])
    assert code == 0
    return out / "manifest.jsonl"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("cmd", [[], ["gen-synth"], ["window"], ["train"], ["eval"], ["analyze"]])
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([*cmd, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--checkpoint", "x", "--manifest", "y", "--bogus"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "--bogus" in err and "valid flags" in err and "--split" in err


def test_gen_synth_writes_loadable_dataset(synth):
    ds = load_manifest(synth)
    assert len(ds) == 24 and len(ds.split("val")) == 6
    report = json.loads((synth.parent / "run.json").read_text())
    assert report["command"] == "gen-synth" and report["seed"] == 4
    assert report["config"]["n_samples"] == 24
    assert "wall_time_s" in report["metadata"]


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DIVFUSE_SEED", "17")
    assert main(["gen-synth", "--out", str(tmp_path), "--n-samples", "4", "--t-visual", "2", "3",
                 "--t-audio", "2", "3"]) == 0
    assert json.loads((tmp_path / "run.json").read_text())["config"]["seed"] == 17
    monkeypatch.setenv("DIVFUSE_SEED", "seventeen")
    assert main(["gen-synth", "--out", str(tmp_path / "b"), "--n-samples", "4"]) == 2


def test_window_command(tmp_path):
    frames = np.random.default_rng(0).uniform(0, 1, (40, 20))
    write_feature_matrix(tmp_path / "au.csv", frames)
    assert main(["window", "--input", str(tmp_path / "au.csv"), "--out", str(tmp_path / "w.csv")]) == 0
    lines = (tmp_path / "w.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert len(header) == 80 and header[:4] == ["AU01_mean", "AU01_std", "AU01_slope", "AU01_range"]
    assert len(lines) == 1 + (40 - 16) // 8 + 1
    first = np.array(lines[1].split(","), dtype=float)
    assert first[0] == pytest.approx(frames[:16, 0].mean(), rel=1e-15)


def test_window_bad_input_is_data_error(tmp_path, capsys):
    write_feature_matrix(tmp_path / "au.csv", np.ones((10, 19)))
    assert main(["window", "--input", str(tmp_path / "au.csv"), "--out", str(tmp_path / "w.csv")]) == 3
    assert not (tmp_path / "w.csv").exists()
    assert "data error" in capsys.readouterr().err


def test_train_then_eval_reproduces_best_val_f1(synth, tmp_path):
    ckpt = tmp_path / "model.npz"
    hist = tmp_path / "hist.csv"
    assert main(["train", "--manifest", str(synth), "--fusion", "C", "--out", str(ckpt),
                 "--history", str(hist), "--seed", "3", *TINY_MODEL]) == 0
    rows = read_csv(hist)
    best = [r for r in rows if r["is_best"] == "1"]
    assert len(best) == 1
    assert (tmp_path / "hist.png").stat().st_size > 0
    out = tmp_path / "eval.csv"
    assert main(["eval", "--checkpoint", str(ckpt), "--manifest", str(synth), "--split", "val", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert float(row["macro_f1"]) == float(best[0]["val_f1"])
    assert row["variant"] == "C" and row["split"] == "val"
    assert sum(int(row[k]) for k in ("tp", "fp", "tn", "fn")) == 6


def test_train_outputs_are_byte_identical(synth, tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["train", "--manifest", str(synth), "--out", str(d / "m.npz"), "--seed", "1", *TINY_MODEL]) == 0
        outs.append(d)
    for f in ("m.npz", "m.history.csv", "m.history.png"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    ra, rb = (json.loads((d / "m.run.json").read_text()) for d in outs)
    ra.pop("metadata"), rb.pop("metadata")
    ra.pop("outputs"), rb.pop("outputs")
    assert ra == rb


def test_train_all_writes_comparison(synth, tmp_path):
    assert main(["train", "--manifest", str(synth), "--fusion", "all", "--out", str(tmp_path / "m.npz"), *TINY_MODEL]) == 0
    rows = read_csv(tmp_path / "m_ablation.csv")
    assert [r["variant"] for r in rows] == ["A", "B", "C"]
    assert rows[1]["name"] == "Fusion B (divergence)"
    assert all(0.0 <= float(r["macro_f1"]) <= 1.0 and r["split"] == "test" for r in rows)
    for v in "ABC":
        assert (tmp_path / f"m_{v}.npz").exists()
    assert (tmp_path / "m_ablation.png").exists()


def test_eval_missing_checkpoint(synth, tmp_path, capsys):
    out = tmp_path / "eval.csv"
    code = main(["eval", "--checkpoint", str(tmp_path / "none.npz"), "--manifest", str(synth), "--out", str(out)])
    assert code == 3
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []
    assert "data error" in capsys.readouterr().err


def test_eval_corrupt_checkpoint(synth, tmp_path):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip")
    assert main(["eval", "--checkpoint", str(bad), "--manifest", str(synth)]) == 3


def test_train_config_error_is_usage(synth, tmp_path):
    code = main(["train", "--manifest", str(synth), "--out", str(tmp_path / "m.npz"), "--fusion", "B",
                 "--modalities", "visual", *TINY_MODEL])
    assert code == 2
    assert not (tmp_path / "m.npz").exists()


def test_analyze_command(synth, tmp_path):
    out = tmp_path / "report.csv"
    assert main(["analyze", "--manifest", str(synth), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 100
    assert list(rows[0]) == ["feature", "metric", "mean_pos", "mean_neg", "U", "Z", "p", "r", "significant"]
    rs = [float(r["r"]) for r in rows]
    assert rs == sorted(rs, reverse=True)
    assert (tmp_path / "report.png").stat().st_size > 0
    assert json.loads((tmp_path / "report.run.json").read_text())["results"]["n_features"] == 100
