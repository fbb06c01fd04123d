"""End-to-end runs of the command-line interface, all in process."""

import csv
import json
import os

import numpy as np
import pytest

from cgforensics import democorpus
from cgforensics.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, backbone_path):
    """A small corpus plus a config ready for the full command chain."""
    root = tmp_path_factory.mktemp("cli")
    manifest = democorpus.generate(str(root / "corpus"), per_class=8, seed=11)
    out = str(root / "run")
    cfg = root / "run.ini"
    cfg.write_text("""
[experiment]
manifest = %s
backbone = %s
output_dir = %s
seed = 5
batch = 8
workers = 2

[train]
epochs = 12
batch_size = 16
""" % (manifest, backbone_path, out))
    return {"root": root, "cfg": str(cfg), "out": out, "manifest": manifest}


def _read_csv(path):
    with open(path) as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def _stamp(path):
    with open(path) as f:
        return [line[2:].strip() for line in f if line.startswith("# ")]


def test_usage_errors(tmp_path, capsys):
    assert main(["train"]) == EXIT_USAGE                      # -c is required
    assert main(["train", "-c", str(tmp_path / "nope.ini")]) == EXIT_USAGE
    assert main(["frobnicate", "-c", "x"]) == EXIT_USAGE      # unknown command
    cfg = tmp_path / "empty.ini"
    cfg.write_text("[experiment]\n")
    assert main(["split", "-c", str(cfg),
                 "--output-dir", str(tmp_path / "o")]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "missing manifest" in err


def test_split(workdir, capsys):
    assert main(["split", "-c", workdir["cfg"]]) == EXIT_OK
    out = os.path.join(workdir["out"], "manifest_split.csv")
    assert os.path.exists(out)
    assert capsys.readouterr().out.count("test=") == 1
    header, rows = _read_csv(out)
    assert header == ["image_id", "path", "label", "category", "split"]
    assert len(rows) == 24
    splits = [r[4] for r in rows]
    # stratified per (label, category): each 4-image stratum splits 2/1/1
    assert splits.count("train") == 12
    assert splits.count("val") == 6
    assert splits.count("test") == 6
    assert any(s.startswith("config_hash=") for s in _stamp(out))
    # downstream commands read the split manifest
    cfgtext = open(workdir["cfg"]).read().replace(
        "manifest = %s" % workdir["manifest"], "manifest = %s" % out)
    with open(workdir["cfg"], "w") as f:
        f.write(cfgtext)


def test_extract(workdir, capsys):
    assert main(["extract", "-c", workdir["cfg"]]) == EXIT_OK
    out = capsys.readouterr().out
    for branch in ("RGB", "LCH", "HSV"):
        assert os.path.exists(
            os.path.join(workdir["out"], "features_%s.mcef" % branch))
    assert out.count("24 new") == 3


def test_extract_resumes(workdir, capsys):
    assert main(["extract", "-c", workdir["cfg"]]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("24 cached, 0 new") == 3


def test_extract_reports_failures(workdir, tmp_path, capsys):
    split = os.path.join(workdir["out"], "manifest_split.csv")
    broken = tmp_path / "broken.csv"
    lines = open(split).read().strip().split("\n")
    lines.append("999,%s,0,train" % (tmp_path / "missing.png"))
    broken.write_text("\n".join(line for line in lines
                                if not line.startswith("#")) + "\n")
    rc = main(["extract", "-c", workdir["cfg"], "--manifest", str(broken),
               "--output-dir", str(tmp_path / "o")])
    assert rc == EXIT_DATA
    err = capsys.readouterr().err
    assert err.count("FAILED") == 3
    assert "999" in err


def test_train(workdir, capsys):
    assert main(["train", "-c", workdir["cfg"]]) == EXIT_OK
    out = capsys.readouterr().out
    assert "11523 parameters" in out
    assert os.path.exists(os.path.join(workdir["out"], "model.mchd"))
    log = os.path.join(workdir["out"], "training_log.csv")
    header, rows = _read_csv(log)
    assert header == ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
    assert len(rows) == 12
    assert [r[0] for r in rows] == [str(i) for i in range(1, 13)]


def test_train_without_extract_fails(workdir, tmp_path):
    rc = main(["train", "-c", workdir["cfg"], "--output-dir", str(tmp_path / "o")])
    assert rc == EXIT_DATA


def test_eval(workdir, capsys):
    assert main(["eval", "-c", workdir["cfg"]]) == EXIT_OK
    out = capsys.readouterr().out
    assert "accuracy" in out.lower()
    report = os.path.join(workdir["out"], "eval_report.txt")
    assert "config_hash=" in open(report).read()
    header, rows = _read_csv(os.path.join(workdir["out"], "metrics.csv"))
    assert header == ["key", "v1", "v2", "v3"]
    keys = [r[0] for r in rows]
    assert "total" in keys
    for name in ("GAN", "Graphics", "Real"):
        assert "class_%s" % name in keys and "matrix_%s" % name in keys
    mat = [list(map(int, r[1:])) for r in rows if r[0].startswith("matrix_")]
    assert sum(sum(row) for row in mat) == 6
    header, rows = _read_csv(os.path.join(workdir["out"], "predictions.csv"))
    assert header == ["image_id", "label"]
    assert len(rows) == 6
    for _, lab in rows:
        assert lab in ("0", "1", "2")


def test_eval_missing_model(workdir, tmp_path):
    rc = main(["eval", "-c", workdir["cfg"],
               "--model", str(tmp_path / "nope.mchd")])
    assert rc == EXIT_DATA


def test_robustness(workdir):
    assert main(["robustness", "-c", workdir["cfg"]]) == EXIT_OK
    header, rows = _read_csv(os.path.join(workdir["out"], "robustness.csv"))
    assert header == ["qf", "accuracy"]
    assert [int(r[0]) for r in rows] == list(range(100, 0, -10))
    for _, acc in rows:
        assert 0.0 <= float(acc) <= 1.0


def test_tsne(workdir):
    assert main(["tsne", "-c", workdir["cfg"], "--split", "all",
                 "--perplexity", "4", "--iterations", "60"]) == EXIT_OK
    header, rows = _read_csv(os.path.join(workdir["out"], "embedding.csv"))
    assert header == ["x", "y", "label"]
    assert len(rows) == 24
    svg = open(os.path.join(workdir["out"], "embedding.svg")).read()
    assert svg.startswith("<svg")


def test_cam(workdir):
    import glob
    assert main(["cam", "-c", workdir["cfg"], "--limit", "2"]) == EXIT_OK
    assert len(glob.glob(os.path.join(workdir["out"], "heatmap_*.png"))) == 2
    assert len(glob.glob(os.path.join(workdir["out"], "overlay_*.png"))) == 2
    header, rows = _read_csv(os.path.join(workdir["out"], "cam_summary.csv"))
    assert header[:2] == ["image_id", "class"]
    assert len(rows) == 2
    col = header.index("identity_rel_err")
    for r in rows:
        assert float(r[col]) < 1e-3


def test_significance(workdir, tmp_path, capsys):
    preds = os.path.join(workdir["out"], "predictions.csv")
    other = tmp_path / "other.csv"
    header, rows = _read_csv(preds)
    flipped = [[r[0], str((int(r[1]) + 1) % 3)] for r in rows]
    with open(other, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(flipped)
    assert main(["significance", "--a", preds, "--b", str(other),
                 "--output-dir", str(tmp_path / "sig")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "statistic=" in out and "p=" in out
    header, rows = _read_csv(str(tmp_path / "sig" / "significance.csv"))
    assert header == ["n", "statistic", "df", "p_value"]
    assert rows[0][0] == "6"


def test_significance_disjoint_ids(workdir, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("image_id,label\n1,0\n")
    b.write_text("image_id,label\n2,0\n")
    rc = main(["significance", "--a", str(a), "--b", str(b),
               "--output-dir", str(tmp_path / "sig")])
    assert rc == EXIT_DATA


def test_psycho_init_only(workdir, capsys):
    assert main(["psycho-serve", "-c", workdir["cfg"], "--init-only",
                 "--n", "8"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "24 images" in out
    study = os.path.join(workdir["out"], "study", "study.json")
    with open(study) as f:
        doc = json.load(f)
    assert doc["n_per_session"] == 8
    assert len(doc["images"]) == 24
    # truth labels ride along for the export summary
    assert all("label" in im for im in doc["images"])


def test_seed_override_changes_hash(workdir, tmp_path):
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    main(["split", "-c", workdir["cfg"], "--manifest", workdir["manifest"],
          "--output-dir", str(out1), "--seed", "1"])
    main(["split", "-c", workdir["cfg"], "--manifest", workdir["manifest"],
          "--output-dir", str(out2), "--seed", "2"])
    s1 = _stamp(str(out1 / "manifest_split.csv"))
    s2 = _stamp(str(out2 / "manifest_split.csv"))
    assert s1 != s2
    assert "seed=1" in s1 and "seed=2" in s2
