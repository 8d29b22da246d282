import json

import numpy as np
import pytest

from dwnhar import datahar, infer
from dwnhar.cli import EXIT_CODES, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


SMALL = ("--layers", "60", "--pool-size", "64", "--epochs", "2", "--batch-size", "50",
         "--bits-per-value", "6")


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--synthetic", "150", "--out", str(out), "--quiet", *SMALL])
    assert code == 0
    return out


def test_train_outputs(trained):
    for name in ("config.txt", "epochs.jsonl", "checkpoint.npz", "model.dwnm", "metrics.json"):
        assert (trained / name).is_file()
    epochs = [json.loads(l) for l in (trained / "epochs.jsonl").read_text().splitlines()]
    assert [e["epoch"] for e in epochs] == [0, 1]
    assert "layers = 60" in (trained / "config.txt").read_text()
    metrics = json.loads((trained / "metrics.json").read_text())
    assert metrics["size_bytes"] == 60 * 16 // 8


def test_eval_reprints_logged_accuracy(trained, capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "--synthetic", "150", "--model",
                       str(trained / "model.dwnm"), "--confusion-out", str(tmp_path / "cm.txt"))
    assert code == 0
    rec = json.loads(out.splitlines()[0])
    logged = json.loads((trained / "epochs.jsonl").read_text().splitlines()[-1])
    assert abs(rec["accuracy"] - logged["test_accuracy"]) <= 1e-6
    assert "walking_upstairs" in (tmp_path / "cm.txt").read_text()


def test_export_matches_training_output(trained, capsys, tmp_path):
    code, _, _ = run(capsys, "export", "--checkpoint", str(trained / "checkpoint.npz"),
                     "--out", str(tmp_path / "m.dwnm"))
    assert code == 0
    assert (tmp_path / "m.dwnm").read_bytes() == (trained / "model.dwnm").read_bytes()


def test_emit_rtl_check(trained, capsys, tmp_path):
    code, out, _ = run(capsys, "emit-rtl", "--model", str(trained / "model.dwnm"),
                       "--out", str(tmp_path / "top.sv"), "--check", "300")
    assert code == 0
    rec = json.loads(out)
    assert rec["agree"] == rec["checked"] == 300 and rec["lut"] == 60
    assert (tmp_path / "top.sv").read_text().startswith("// dwn_top")


def test_bench(trained, capsys):
    code, out, _ = run(capsys, "bench", "--model", str(trained / "model.dwnm"),
                       "--random", "200", "--repetitions", "2")
    assert code == 0
    rec = json.loads(out)
    assert rec["inferences"] == 400 and rec["samples_per_second"] > 0


def test_report(trained, capsys):
    code, out, _ = run(capsys, "report", "--run", str(trained))
    assert code == 0
    assert "HARMamba" in out and "model.dwnm" in out


def test_estimate_energy(capsys):
    code, out, _ = run(capsys, "estimate-energy", "--flops", "44000000")
    rec = json.loads(out)
    assert code == 0 and round(rec["energy_mj"], 1) == 33.5 and rec["energy_mj_rounded"] == 33


def test_prepare_data(tmp_path, capsys):
    rng = np.random.default_rng(0)
    for split, subj in (("train", [1, 2]), ("test", [3])):
        datahar.write_split(tmp_path, split, rng.normal(size=(5, 9, 128)),
                            rng.integers(1, 7, 5), rng.choice(subj, 5))
    code, out, _ = run(capsys, "prepare-data", "--data-root", str(tmp_path))
    assert code == 0
    recs = [json.loads(l) for l in out.splitlines()]
    assert [r["samples"] for r in recs] == [5, 5]


def test_config_error_line_number(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epochs = 1\nfoo = 2\n")
    code, _, err = run(capsys, "train", "--synthetic", "20", "--out", str(tmp_path / "o"),
                       "--config", str(cfg))
    assert code == EXIT_CODES["config"]
    assert err.strip() == f"error: config: {cfg}:2: unknown key 'foo'"


@pytest.mark.parametrize("argv,category", [
    (["eval", "--synthetic", "5", "--model", "/nonexistent.dwnm"], "missing-file"),
    (["train", "--bogus"], "usage"),
    (["frobnicate"], "usage"),
])
def test_error_categories(argv, category, capsys):
    code, out, err = run(capsys, *argv)
    assert code == EXIT_CODES[category] != 0
    assert len(err.strip().splitlines()) == 1 and err.startswith(f"error: {category}:")


def test_eval_needs_data_source(trained, capsys):
    code, _, err = run(capsys, "eval", "--model", str(trained / "model.dwnm"))
    assert code == EXIT_CODES["usage"] and "--data-root" in err


def test_corrupt_model_file(tmp_path, capsys):
    p = tmp_path / "x.dwnm"
    p.write_bytes(b"NOPE" + bytes(20))
    code, _, err = run(capsys, "emit-rtl", "--model", str(p), "--out", str(tmp_path / "a.sv"))
    assert code == EXIT_CODES["model-format"] and "offset 0" in err


def test_train_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--synthetic", "60", "--out", str(tmp_path / name), "--quiet",
                     "--no-test", "--seed", "4", *SMALL]) == 0
    assert (tmp_path / "a" / "model.dwnm").read_bytes() == (tmp_path / "b" / "model.dwnm").read_bytes()
    assert infer.load(tmp_path / "a" / "model.dwnm").timesteps == 128
