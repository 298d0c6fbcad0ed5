import json
import re

import numpy as np
import pytest

from dino_forge.cli import main
from dino_forge.data import write_embedding_dump, write_label_csv

TINY = ["--set", "model.image_size=16", "--set", "model.embed_dim=16", "--set", "model.depth=1",
        "--set", "model.heads=2", "--set", "model.projector_hidden=32", "--set", "model.projector_out=16",
        "--set", "model.prototypes=32", "--batch-size", "16"]


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def test_synth_then_train_pipeline(tmp_path, capsys):
    syn = tmp_path / "syn"
    assert main(["-q", "synth-data", "--out", str(syn), "--n", "80", "--image-size", "32"]) == 0
    assert (syn / "labels.csv").exists() and (syn / "ciw.csv").exists() and (syn / "spec.json").exists()
    capsys.readouterr()

    assert main(["-q", "pretrain", "--dataset", str(syn / "labels.csv"), "--epochs", "2", "--out", str(tmp_path / "runs"),
                 "--set", "optim.warmup_epochs=1", *TINY]) == 0
    run = capsys.readouterr().out.strip()
    name = run.rsplit("/", 1)[-1]
    assert re.fullmatch(r"pretrain-\d{8}T\d{12}Z-0", name)
    files = {p.name for p in (tmp_path / "runs" / name).iterdir()}
    assert {"config.ini", "runlog.jsonl", "curves.csv", "final.ckpt", "report.json", "report.txt",
            "val_embeddings.txt"} <= files
    assert len((tmp_path / "runs" / name / "runlog.jsonl").read_text().splitlines()) == 2

    ft = tmp_path / "ft"
    assert main(["-q", "finetune", "--dataset", str(syn / "labels.csv"), "--pretrained", f"{run}/final.ckpt",
                 "--epochs", "2", "--fraction", "0.5", "--ciw", str(syn / "ciw.csv"), "--run-dir", str(ft),
                 "--batch-size", "16"]) == 0
    capsys.readouterr()
    report = json.loads((ft / "report.json").read_text())
    assert 0 <= report["f2_ciw"] <= 100 and report["rankme"] >= 1
    assert "F2_CIW" in (ft / "report.txt").read_text()

    # the echoed config alone reproduces the run
    again = tmp_path / "again"
    assert main(["-q", "finetune", "--config", str(ft / "config.ini"), "--run-dir", str(again)]) == 0
    strip = [{k: v for k, v in json.loads(line).items() if k != "wall_time"}
             for line in (ft / "runlog.jsonl").read_text().splitlines()]
    strip2 = [{k: v for k, v in json.loads(line).items() if k != "wall_time"}
              for line in (again / "runlog.jsonl").read_text().splitlines()]
    assert strip == strip2

    capsys.readouterr()
    args = ["evaluate", "--predictions", str(ft / "val_predictions.csv"), "--labels", str(ft / "val_labels.csv"),
            "--ciw", str(syn / "ciw.csv")]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    assert json.loads(first)["f2_ciw"] == pytest.approx(report["f2_ciw"])


def test_evaluate_perfect_file(tmp_path, capsys):
    labels = np.array([[1, 0], [0, 1], [0, 0], [1, 1]])
    paths = [f"{i}.png" for i in range(4)]
    write_label_csv(tmp_path / "l.csv", paths, ["A", "B"], labels)
    # same rows in a different order and column order
    write_label_csv(tmp_path / "p.csv", paths[::-1], ["B", "A"], labels[::-1][:, ::-1].astype(float), "{:.3f}")
    assert main(["evaluate", "--predictions", str(tmp_path / "p.csv"), "--labels", str(tmp_path / "l.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["f2_ciw"] == 100.0 and rep["f1_normal"] == 100.0


def test_rankme_command(tmp_path, capsys):
    write_embedding_dump(tmp_path / "e.txt", np.eye(6))
    assert main(["rankme", str(tmp_path / "e.txt")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(6.0, rel=1e-5)


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--shapes", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("PASS") for line in lines)
    assert any("composed vit+dino" in line for line in lines)


def test_bad_config_exit_2(tmp_path, capsys):
    assert main(["pretrain", "--dataset", "x.csv", "--set", "optim.bogus=1"]) == 2
    assert last_error(capsys)["error"] == "config"
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nmode = finetune\n")
    assert main(["pretrain", "--config", str(cfg), "--dataset", "x.csv"]) == 2
    assert main(["finetune", "--dataset", "x.csv"]) == 2
    assert main(["no-such-command"]) == 2
    assert last_error(capsys)["error"] == "usage"


def test_runtime_failure_exit_1(tmp_path, capsys):
    assert main(["pretrain", "--dataset", str(tmp_path / "missing.csv")]) == 1
    err = last_error(capsys)
    assert "missing.csv" in err["message"]
    (tmp_path / "e.txt").write_text("dim=2\n1,2,3\n")
    assert main(["rankme", str(tmp_path / "e.txt")]) == 1
