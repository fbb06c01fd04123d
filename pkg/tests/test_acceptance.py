"""Acceptance gate for the toolkit.

Each test covers one release criterion and announces a single
"Pn PASS/FAIL" line on the terminal (see the hook in conftest.py).
The suite is property-based plus a small end-to-end run on the bundled
synthetic corpus; it asserts behavior, not headline benchmark numbers.
"""

import csv
import os
import time

import numpy as np
import pytest

from cgforensics import imgio
from cgforensics.cli import main
from cgforensics.colorspace import (COLORSPACES, RESCALED, ImageTensor,
                                    from_raw, inverse_transform, rescale_0_255,
                                    transform)
from cgforensics.evalkit.significance import (agreement_table, chi2_sf,
                                              stuart_maxwell,
                                              stuart_maxwell_from_table)
from cgforensics.evalkit.tsne import tsne
from cgforensics.explain import cam
from cgforensics.head import (HeadModel, TrainConfig, loss_and_grad,
                              param_count, train_head)
from cgforensics.preprocess import (LoGConfig, log_kernel, log_residual,
                                    mc_branches, run_pipeline)
from cgforensics.psycho.store import (DuplicateAnnotationError, StudyFullError,
                                      StudyStore, create_study)


class _Budget:
    """Wall-clock guard with the criterion's stated limit."""

    def __init__(self, seconds):
        self.limit = seconds
        self.t0 = time.monotonic()

    def check(self):
        elapsed = time.monotonic() - self.t0
        assert elapsed < self.limit, "over budget: %.1fs > %ds" % (elapsed, self.limit)


def test_p1_parameter_counts():
    budget = _Budget(1)
    mc = HeadModel(np.zeros((3, 3840)), np.zeros(3))
    sc = HeadModel(np.zeros((3, 1280)), np.zeros(3))
    assert param_count(mc) == 11523
    assert param_count(sc) == 3843
    budget.check()


def test_p2_rescale_property_suite():
    budget = _Budget(30)
    rng = np.random.default_rng(20250818)
    for i in range(1000):
        img = from_raw(rng.integers(0, 256, size=(12, 12, 3)).astype(np.uint8))
        space = COLORSPACES[i % len(COLORSPACES)]
        t = transform(img, space)
        r = rescale_0_255(t).data

        assert np.array_equal(r, np.floor(r))
        assert r.min() >= 0 and r.max() <= 255
        for c in range(3):
            chan = t.data[:, :, c]
            if chan.max() > chan.min():
                assert r[:, :, c].min() == 0
                assert r[:, :, c].max() == 255
            else:
                assert np.all(r[:, :, c] == 0)
            # order preservation: stable sort by input, output never drops
            order = np.argsort(chan.ravel(), kind="stable")
            assert np.all(np.diff(r[:, :, c].ravel()[order]) >= 0)

        # exact power-of-two scaling leaves the quotient bit-identical
        exact = rescale_0_255(ImageTensor(t.data * 2.0, space)).data
        assert np.array_equal(r, exact)
        # a generic affine map may flip inputs sitting exactly on a
        # rounding boundary by one level, never more
        bent = rescale_0_255(ImageTensor(t.data * 3.7 + 11.0, space)).data
        assert np.abs(bent - r).max() <= 1.0
    budget.check()


def test_p3_colorspace_round_trip_and_golden_vectors():
    budget = _Budget(30)
    rng = np.random.default_rng(42)
    pixels = rng.uniform(0.0, 255.0, size=(100, 100, 3))
    src = ImageTensor(pixels, "RGB")
    for space in COLORSPACES:
        back = inverse_transform(transform(src, space))
        err = np.abs(back.data - pixels).max()
        assert err <= 255.0 / 255.0 + 1e-9, "%s round-trip off by %g" % (space, err)

    golden = os.path.join(os.path.dirname(__file__), "data", "golden_colorspace.csv")
    n = 0
    with open(golden) as f:
        for row in csv.DictReader(f):
            rgb = np.array([[[float(row["rgb_r"]), float(row["rgb_g"]),
                              float(row["rgb_b"])]]])
            got = transform(ImageTensor(rgb, "RGB"), row["space"]).data[0, 0]
            want = np.array([float(row["c1"]), float(row["c2"]), float(row["c3"])])
            hue_channel = {"LCH": 2, "HSV": 0, "HLS": 0}.get(row["space"])
            for c in range(3):
                d = abs(got[c] - want[c])
                if c == hue_channel:
                    d = min(d, abs(d - 360.0))
                assert d < 1e-4, "%s channel %d: %g vs %g" % (row["space"], c,
                                                              got[c], want[c])
            n += 1
    assert n == 450
    budget.check()


def test_p4_log_residual():
    budget = _Budget(5)
    k = log_kernel(LoGConfig())
    assert abs(k.sum()) < 1e-9

    flat = ImageTensor(np.full((16, 16, 3), 97.0), "RGB", RESCALED)
    out = log_residual(flat)
    assert np.array_equal(out.data, flat.data)

    # impulse response equals the hand-convolved (flipped) kernel plus
    # the impulse itself, clamped to [0,255]
    img = np.zeros((11, 11, 3))
    img[5, 5, :] = 255.0
    out = log_residual(ImageTensor(img, "RGB", RESCALED)).data
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            expect = 255.0 * k[2 - dy, 2 - dx] + (255.0 if dy == dx == 0 else 0.0)
            expect = min(max(expect, 0.0), 255.0)
            assert abs(out[5 + dy, 5 + dx, 0] - expect) < 1e-9
    budget.check()


def test_p5_backbone_consistency(backbone, bundled_images):
    budget = _Budget(60)
    imgs = [imgio.resize(imgio.load_image(r.path), 224, 224)
            for r in bundled_images]
    assert len(imgs) == 20
    singles = []
    for img in imgs:
        maps, pooled = backbone.extract_maps(img)
        assert np.abs(pooled - maps.mean(axis=(0, 1))).max() < 1e-4
        maps2, pooled2 = backbone.extract_maps(img)
        assert np.array_equal(maps, maps2) and np.array_equal(pooled, pooled2)
        singles.append(pooled)
    batched = backbone.extract_batch(np.stack([np.asarray(i, float) for i in imgs]))
    assert np.abs(batched - np.stack(singles)).max() < 1e-5
    budget.check()


def test_p6_head_training():
    budget = _Budget(120)
    # analytic gradient against central finite differences at D=8
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 8))
    y = rng.integers(0, 3, size=40)
    W = rng.normal(size=(3, 8)) * 0.3
    b = rng.normal(size=3) * 0.3
    _, gW, gb = loss_and_grad(W, b, X, y)
    h = 1e-6
    fdW = np.zeros_like(W)
    for i in range(3):
        for j in range(8):
            Wp, Wm = W.copy(), W.copy()
            Wp[i, j] += h
            Wm[i, j] -= h
            fdW[i, j] = (loss_and_grad(Wp, b, X, y)[0]
                         - loss_and_grad(Wm, b, X, y)[0]) / (2 * h)
    fdb = np.zeros(3)
    for i in range(3):
        bp, bm = b.copy(), b.copy()
        bp[i] += h
        bm[i] -= h
        fdb[i] = (loss_and_grad(W, bp, X, y)[0]
                  - loss_and_grad(W, bm, X, y)[0]) / (2 * h)
    assert np.linalg.norm(gW - fdW) / np.linalg.norm(fdW) < 1e-5
    assert np.linalg.norm(gb - fdb) / np.linalg.norm(fdb) < 1e-5

    # separable 3-blob set at the standard hyperparameters
    rng = np.random.default_rng(7)
    centers = rng.normal(size=(3, 3840))
    Xb = np.concatenate([centers[c] + rng.normal(size=(100, 3840))
                         for c in range(3)]).astype(np.float32)
    yb = np.repeat(np.arange(3), 100)
    cfg = TrainConfig(learning_rate=0.001, batch_size=256, epochs=100, seed=0)
    model, log = train_head(Xb, yb, cfg)
    assert len(log) == 100
    assert max(e["train_acc"] for e in log) >= 0.99

    model2, _ = train_head(Xb, yb, cfg)
    assert np.array_equal(model.weights, model2.weights)
    assert np.array_equal(model.bias, model2.bias)
    budget.check()


def test_p7_cam_logit_identity(backbone, bundled_images):
    budget = _Budget(60)
    rng = np.random.default_rng(11)
    model = HeadModel(rng.normal(size=(3, 3840)) * 0.01, rng.normal(size=3))
    pipes = mc_branches()
    for r in bundled_images:
        img = imgio.load_image(r.path)
        maps_list, pooled_list = [], []
        for pipe in pipes:
            t = run_pipeline(img, pipe)
            maps, pooled = backbone.extract_maps(t.data)
            maps_list.append(maps)
            pooled_list.append(pooled)
        fused = np.concatenate(pooled_list)
        for cls in range(3):
            logit = float(fused @ model.weights[cls] + model.bias[cls])
            heat = cam(model, maps_list, cls)
            identity = float(heat.raw.mean() + model.bias[cls])
            assert abs(identity - logit) / abs(logit) < 1e-3
    budget.check()


def test_p8_marginal_homogeneity():
    budget = _Budget(10)
    symmetric = np.array([[5, 2, 3], [2, 7, 4], [3, 4, 9]])
    stat, df, p = stuart_maxwell_from_table(symmetric)
    assert stat == 0.0 and p == 1.0

    reference = np.array([[20, 5, 0], [2, 30, 4], [1, 3, 35]])
    stat, df, p = stuart_maxwell_from_table(reference)
    assert abs(stat - 32.0 / 63.0) < 1e-9
    assert df == 2
    assert abs(p - 0.7757164275739282) < 1e-6

    for x in (0.0, 0.3, 1.0, 32.0 / 63.0, 5.0, 17.2):
        assert abs(chi2_sf(x, 2) - np.exp(-x / 2.0)) < 1e-10

    # the two entry points agree
    a = [0, 0, 1, 2, 2, 1, 0]
    b = [0, 1, 1, 2, 0, 1, 1]
    assert stuart_maxwell(a, b) == stuart_maxwell_from_table(agreement_table(a, b))
    budget.check()


def test_p9_end_to_end_smoke(tmp_path, corpus_manifest, backbone_path):
    budget = _Budget(900)
    out = str(tmp_path / "run")
    cfg = tmp_path / "run.ini"
    cfg.write_text("""
[experiment]
manifest = %s
backbone = %s
output_dir = %s
seed = 0
batch = 16
workers = 4

[train]
epochs = 60
batch_size = 32
""" % (corpus_manifest, backbone_path, out))
    assert main(["split", "-c", str(cfg)]) == 0

    split_manifest = os.path.join(out, "manifest_split.csv")
    text = cfg.read_text().replace("manifest = %s" % corpus_manifest,
                                   "manifest = %s" % split_manifest)
    cfg.write_text(text)
    with open(split_manifest) as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")][1:]
    counts = {s: sum(1 for r in rows if r[4] == s) for s in ("train", "val", "test")}
    assert counts == {"train": 72, "val": 24, "test": 24}

    assert main(["extract", "-c", str(cfg)]) == 0
    for branch in ("RGB", "LCH", "HSV"):
        assert os.path.exists(os.path.join(out, "features_%s.mcef" % branch))

    assert main(["train", "-c", str(cfg)]) == 0
    assert main(["eval", "-c", str(cfg)]) == 0
    with open(os.path.join(out, "metrics.csv")) as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    accuracy = float(next(r[1] for r in rows if r[0] == "total"))
    assert accuracy > 0.5, "test accuracy %.3f not above chance margin" % accuracy

    assert main(["robustness", "-c", str(cfg)]) == 0
    with open(os.path.join(out, "robustness.csv")) as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")][1:]
    assert [int(r[0]) for r in rows] == list(range(100, 0, -10))
    qf100 = float(rows[0][1])
    assert abs(qf100 - accuracy) <= 0.10
    budget.check()


def test_p10_tsne_cluster_separation():
    budget = _Budget(60)
    pytest.importorskip("sklearn")
    from sklearn.metrics import silhouette_score
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3840))
    X[100:, 0] += 100.0  # second cluster 100 sigma away
    labels = np.array([0] * 100 + [1] * 100)
    Y = tsne(X, perplexity=30.0, iterations=1000, seed=0)
    assert silhouette_score(Y, labels) > 0.8
    Y2 = tsne(X, perplexity=30.0, iterations=1000, seed=0)
    assert np.array_equal(Y, Y2)
    budget.check()


def test_p11_study_protocol(tmp_path):
    budget = _Budget(30)
    from PIL import Image
    pool = []
    pool_dir = tmp_path / "pool"
    pool_dir.mkdir()
    arr = np.zeros((8, 8, 3), dtype=np.uint8)
    for i in range(330):
        path = str(pool_dir / ("im%03d.png" % i))
        Image.fromarray(arr + (i % 251), "RGB").save(path)
        pool.append({"id": i + 1, "path": path, "label": i % 3})
    sdir = str(tmp_path / "study")
    create_study(sdir, "gate", pool, n_per_session=30, seed=1)

    store = StudyStore(sdir)
    sessions = [store.create_session("p%02d" % i) for i in range(11)]
    seen = set()
    for s in sessions:
        ids = set(s.image_ids)
        assert len(ids) == 30
        assert not ids & seen  # pairwise disjoint
        seen |= ids
    assert seen == set(store.pool_order)  # the pool is exhausted
    with pytest.raises(StudyFullError):
        store.create_session("p11")

    first = sessions[0]
    for iid in first.image_ids:
        store.submit_annotation(first.session_id, iid, "Real", [], 100)
    partial = sessions[1]
    store.submit_annotation(partial.session_id, partial.image_ids[0], "GAN", [], 50)
    with pytest.raises(DuplicateAnnotationError):
        store.submit_annotation(partial.session_id, partial.image_ids[0],
                                "Graphics", [], 50)

    # kill and restart: a fresh store replays its logs
    revived = StudyStore(sdir)
    assert revived.get_session(first.session_id).cursor == 30
    assert revived.get_session(partial.session_id).cursor == 1
    for s in sessions:
        assert revived.get_session(s.session_id).image_ids == s.image_ids
    with pytest.raises(StudyFullError):
        revived.create_session("p11")
    with pytest.raises(DuplicateAnnotationError):
        revived.submit_annotation(partial.session_id, partial.image_ids[0],
                                  "Real", [], 50)

    records = revived.export_records()
    assert len(records) == 31
    by_key = {(r["session_id"], r["image_id"]): r["label"] for r in records}
    for iid in first.image_ids:
        assert by_key[(first.session_id, iid)] == "Real"
    assert by_key[(partial.session_id, partial.image_ids[0])] == "GAN"
    summary = revived.export_summary(records)
    assert summary["annotations"] == 31 and summary["scored"] == 31
    budget.check()
