import json

import numpy as np
import pytest

from gaitsiam import pipeline as pl
from gaitsiam.cli import main
from gaitsiam.config import parse_config

SMALL = ("dataset: {n_subjects: 3, duration: 40}\n"
         "train: {epochs: 1, R: 16, batch_size: 8, target_loss: null}\n"
         "transfer: {source_subjects: 3, source_R: 16, source_epochs: 1}\n"
         "fusion: {sessions: 4}\n"
         "threat: {trials: 10, attack_subjects: 2, attack_duration: 40, batch_sizes: [1, 4]}\n")


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    path = root / "small.yaml"
    path.write_text(SMALL)
    assert main(["train", "--config", str(path), "--out", str(root / "train"), "--quiet"]) == 0
    return root, path


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["fly"]) == 1
    assert main(["train", "--bogus"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: {speed: 3}\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["eval", "--out", str(tmp_path)]) == 1
    assert main(["eval", "--checkpoint", str(tmp_path / "none.gfck"), "--out", str(tmp_path)]) == 1
    assert main(["train", "--seed", "-1"]) == 1
    assert "error" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_2(tmp_path):
    blob = tmp_path / "x.gfck"
    blob.write_bytes(b"not a checkpoint")
    assert main(["eval", "--checkpoint", str(blob), "--out", str(tmp_path), "--quiet"]) == 2


def test_train_outputs(small):
    root, _ = small
    out = root / "train"
    assert {p.name for p in out.iterdir()} >= {"config.yaml", "history.jsonl", "model.gfck"}
    rows = [json.loads(x) for x in (out / "history.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1]
    assert parse_config((out / "config.yaml").read_text()) == parse_config(SMALL)


def test_eval_fuse_attack(small):
    root, cfg = small
    ckpt = str(root / "train" / "model.gfck")
    common = ["--config", str(cfg), "--checkpoint", ckpt, "--quiet"]
    assert main(["eval", "--out", str(root / "eval"), *common]) == 0
    report = json.loads((root / "eval" / "eval.json").read_text())
    assert 0 <= report["mAP"] <= 1 and len(report["far_frr_curve"]) == 59

    assert main(["fuse", "--out", str(root / "fuse"), *common]) == 0
    fuse = json.loads((root / "fuse" / "fuse.json").read_text())
    assert fuse["sessions"] == 4
    lines = (root / "fuse" / "decisions.jsonl").read_text().splitlines()
    assert set(json.loads(lines[0])) == {"session", "n", "d", "p", "lambda", "outcome"}

    assert main(["attack", "--out", str(root / "attack"), "--defended-checkpoint", ckpt,
                 *common]) == 0
    attack = json.loads((root / "attack" / "attack.json").read_text())
    # 2 arms x (1 passive + 3 active denoisers) x 2 batch sizes
    assert len(attack["scenarios"]) == 16
    assert set(attack["genuine_acceptance"]) == {"undefended", "defended"}


def test_eval_rejects_foreign_architecture(small, tmp_path):
    root, cfg = small
    other = tmp_path / "vgg.yaml"
    other.write_text(SMALL + "model: {arch: vgg8}\n")
    assert main(["eval", "--config", str(other), "--checkpoint",
                 str(root / "train" / "model.gfck"), "--out", str(tmp_path), "--quiet"]) == 2


def test_transfer_writes_both_arms(small):
    root, cfg = small
    out = root / "transfer"
    assert main(["transfer", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    summary = json.loads((out / "transfer.json").read_text())
    assert set(summary) == {"transfer", "scratch"}
    assert summary["transfer"]["k"] == 3 and summary["scratch"]["k"] == 0
    assert (out / "source.gfck").exists() and (out / "model.gfck").exists()


def test_synth_then_train_from_csv(tmp_path):
    cfg_path = tmp_path / "synth.yaml"
    cfg_path.write_text("dataset: {n_subjects: 2, duration: 30}\n")
    assert main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "data"),
                 "--quiet"]) == 0
    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text())
    assert len(manifest["subjects"]) == 2
    csv_cfg = parse_config(f"dataset: {{source: csv, csv_dir: '{tmp_path / 'data'}', "
                           f"n_subjects: 2, duration: 30}}\n")
    from_csv = pl.load_cohort(csv_cfg)
    direct = pl.load_cohort(parse_config(cfg_path.read_text()))
    for a, b in zip(from_csv, direct):
        np.testing.assert_allclose(a.train_images, b.train_images, atol=1e-9)


def test_profile(tmp_path):
    assert main(["profile", "--out", str(tmp_path), "--quiet"]) == 0
    prof = json.loads((tmp_path / "profile.json").read_text())
    assert prof["pairs_per_epoch"] == 400 and prof["params"] == 168_992
    assert set(prof["inference_ms"]) == {str(b) for b in range(4, 57, 4)}
