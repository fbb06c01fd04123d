"""Operator command line.

Subcommands: extract, train, eval, robustness, tsne, cam, significance,
psycho-serve, split. Exit codes: 0 success, 1 usage, 2 data error,
3 numeric failure. Numeric outputs all begin with comment lines carrying
the config hash and seed, so any result file names the run that made it.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image

from . import LABEL_NAMES, featurecache as fc, imgio
from .backbone import BackboneLoadError, load_backbone
from .config import ConfigError, ExperimentConfig, load_config
from .evalkit import (read_manifest, split_dataset, stuart_maxwell,
                      tsne as tsne_embed, write_embedding_csv,
                      write_embedding_svg, write_manifest)
from .evalkit.metrics import confusion_matrix, from_matrix
from .evalkit.robustness import extract_fused, robustness_sweep
from .explain import cam, marking_agreement, overlay, save_heatmap_png
from .head import (TrainingError, load_head, param_count, predict, save_head,
                   train_head, write_log_csv, fuse_records)
from .preprocess import run_pipeline
from .psycho.store import LABEL_TO_INT, StudyError, create_study

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract here reserves 2 for data
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    p = _Parser(prog="cgforensics", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text, config_required=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("-c", "--config", required=config_required,
                        help="experiment config file (INI)")
        sp.add_argument("--output-dir", help="override the config output_dir")
        sp.add_argument("--seed", type=int, help="override the config seed")
        return sp

    sp = add("split", "assign train/val/test splits to a manifest")
    sp.add_argument("--manifest", help="override the config manifest")
    sp.add_argument("--out", help="output manifest path")

    sp = add("extract", "compute branch feature caches")
    sp.add_argument("--manifest", help="override the config manifest")
    sp.add_argument("--workers", type=int, help="parallel image loaders")

    sp = add("train", "train the softmax head from cached features")

    sp = add("eval", "evaluate a trained head on a manifest split")
    sp.add_argument("--manifest", help="external manifest (generalizability run)")
    sp.add_argument("--features-dir", help="directory holding the caches")
    sp.add_argument("--model", help="head model file")
    sp.add_argument("--split", default="test",
                    choices=["train", "val", "test", "all"])

    sp = add("robustness", "JPEG quality-factor sweep on the test split")
    sp.add_argument("--model", help="head model file")

    sp = add("tsne", "2-d feature embedding of a split")
    sp.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    sp.add_argument("--perplexity", type=float, default=30.0)
    sp.add_argument("--iterations", type=int, default=1000)

    sp = add("cam", "class-activation heatmaps for test images")
    sp.add_argument("--model", help="head model file")
    sp.add_argument("--ids", help="comma-separated image ids (default: first test images)")
    sp.add_argument("--limit", type=int, default=8)
    sp.add_argument("--annotations", help="study export (jsonl) with human boxes")

    sp = add("significance", "marginal-homogeneity test between two prediction files",
             config_required=False)
    sp.add_argument("--a", required=True, help="predictions: csv image_id,label or study export jsonl")
    sp.add_argument("--b", required=True, help="second prediction file")

    sp = add("psycho-serve", "run the human-study service")
    sp.add_argument("--study-dir", help="override the config study_dir")
    sp.add_argument("--init", action="store_true",
                    help="create the study from the manifest before serving")
    sp.add_argument("--init-only", action="store_true",
                    help="create the study and exit without serving")
    sp.add_argument("--n", type=int, default=30, help="images per session")
    return p


def _resolve_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if getattr(args, "manifest", None):
        cfg.manifest = args.manifest
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg


def _need(cfg, attr, what):
    value = getattr(cfg, attr)
    if not value:
        raise UsageError("config is missing %s (%s)" % (attr, what))
    return value


def _write_csv(path, stamp, header, rows):
    with open(path, "w", newline="") as f:
        for line in stamp:
            f.write("# %s\n" % line)
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


# ------------------------------------------------------------------ commands

def cmd_split(args, cfg):
    records = read_manifest(_need(cfg, "manifest", "input manifest"))
    assigned = split_dataset(records, seed=cfg.seed)
    out = args.out or os.path.join(cfg.output_dir, "manifest_split.csv")
    write_manifest(out, assigned, header_lines=cfg.stamp_lines())
    counts = {}
    for r in assigned:
        counts[r.split] = counts.get(r.split, 0) + 1
    print("wrote %s (%s)" % (out, ", ".join("%s=%d" % kv for kv in sorted(counts.items()))))
    return EXIT_OK


def _cache_path(cfg, branch, base_dir=None):
    return os.path.join(base_dir or cfg.output_dir, "features_%s.mcef" % branch)


def cmd_extract(args, cfg):
    records = read_manifest(_need(cfg, "manifest", "dataset manifest"))
    bb = load_backbone(_need(cfg, "backbone", "extractor graph file"))
    workers = args.workers or cfg.workers
    failures = []
    for pipe in cfg.pipeline_set():
        path = _cache_path(cfg, pipe.branch)
        if not os.path.exists(path):
            fc.write_cache(path, 1280, [])
        done = fc.read_ids(path)
        todo = [r for r in records if r.image_id not in done]

        def prepare(rec):
            try:
                img = imgio.load_image(rec.path)
                return rec, run_pipeline(img, pipe).data
            except Exception as e:
                failures.append((pipe.branch, rec.image_id, str(e)))
                return rec, None

        new = 0
        for start in range(0, len(todo), cfg.batch):
            chunk = todo[start:start + cfg.batch]
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    prepared = list(pool.map(prepare, chunk))
            else:
                prepared = [prepare(r) for r in chunk]
            prepared = [(r, t) for r, t in prepared if t is not None]
            if not prepared:
                continue
            feats = bb.extract_batch(np.stack([t for _, t in prepared]))
            fc.append_cache(path, [
                (r.image_id, r.label, fc.branch_index(pipe.space), v)
                for (r, _), v in zip(prepared, feats)])
            new += len(prepared)
        print("branch %s: %d cached, %d new -> %s" % (pipe.branch, len(done), new, path))
    if failures:
        for branch, image_id, err in failures:
            print("FAILED %s image %d: %s" % (branch, image_id, err), file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _load_features(cfg, base_dir=None):
    pipes = cfg.pipeline_set()
    per_branch = {}
    for pipe in pipes:
        path = _cache_path(cfg, pipe.branch, base_dir)
        if not os.path.exists(path):
            raise TrainingError("missing feature cache %s (run extract first)" % path)
        per_branch[pipe.branch] = fc.read_cache(path)[1]
    if len(pipes) == 1:
        ids, labels, X = fc.as_matrix(per_branch[pipes[0].branch])
    else:
        ids, labels, X = fuse_records(per_branch)
    return ids, labels, X


def _split_rows(records, ids, split):
    wanted = {r.image_id for r in records if split == "all" or r.split == split}
    idx = np.array([i for i, iid in enumerate(ids) if int(iid) in wanted], dtype=np.int64)
    missing = wanted - {int(i) for i in ids}
    return idx, sorted(missing)


def cmd_train(args, cfg):
    records = read_manifest(_need(cfg, "manifest", "dataset manifest"))
    ids, labels, X = _load_features(cfg)
    by_id = {r.image_id: r for r in records}
    for iid, lab in zip(ids, labels):
        rec = by_id.get(int(iid))
        if rec is not None and rec.label != lab:
            raise TrainingError("cache label disagrees with manifest for image %d" % iid)
    tr_idx, tr_missing = _split_rows(records, ids, "train")
    va_idx, va_missing = _split_rows(records, ids, "val")
    if tr_missing or va_missing:
        raise TrainingError("features missing for images: %s"
                            % (tr_missing + va_missing)[:20])
    if len(tr_idx) == 0:
        raise TrainingError("no training rows; did you run split?")
    val = (X[va_idx], labels[va_idx]) if len(va_idx) else None
    model, log = train_head(X[tr_idx], labels[tr_idx], cfg.train, val=val)
    model_path = os.path.join(cfg.output_dir, "model.mchd")
    save_head(model, model_path)
    write_log_csv(os.path.join(cfg.output_dir, "training_log.csv"), log,
                  header_lines=cfg.stamp_lines())
    last = log[-1]
    print("trained head: %d parameters, train acc %.4f%s -> %s" % (
        param_count(model), last["train_acc"],
        (", val acc %.4f" % last["val_acc"]) if "val_acc" in last else "",
        model_path))
    return EXIT_OK


def cmd_eval(args, cfg):
    records = read_manifest(_need(cfg, "manifest", "dataset manifest"))
    ids, labels, X = _load_features(cfg, args.features_dir)
    model = load_head(args.model or os.path.join(cfg.output_dir, "model.mchd"))
    idx, missing = _split_rows(records, ids, args.split)
    if missing:
        raise TrainingError("features missing for images: %s" % missing[:20])
    if len(idx) == 0:
        raise TrainingError("no rows in split %r" % args.split)
    probs, pred = predict(model, X[idx])
    res = from_matrix(confusion_matrix(labels[idx], pred))
    stamp = cfg.stamp_lines()
    report = "\n".join(["# " + s for s in stamp] + [res.report()])
    with open(os.path.join(cfg.output_dir, "eval_report.txt"), "w") as f:
        f.write(report + "\n")
    rows = [["class_%s" % LABEL_NAMES[i], "%.6f" % res.per_class[i]] for i in range(3)]
    rows.append(["total", "%.6f" % res.total])
    for i in range(3):
        rows.append(["matrix_%s" % LABEL_NAMES[i]] + [str(v) for v in res.matrix[i]])
    _write_csv(os.path.join(cfg.output_dir, "metrics.csv"), stamp,
               ["key", "v1", "v2", "v3"], rows)
    _write_csv(os.path.join(cfg.output_dir, "predictions.csv"), stamp,
               ["image_id", "label"],
               [[int(iid), int(p)] for iid, p in zip(ids[idx], pred)])
    print(report)
    return EXIT_OK


def cmd_robustness(args, cfg):
    records = [r for r in read_manifest(_need(cfg, "manifest", "dataset manifest"))
               if r.split == "test"]
    bb = load_backbone(_need(cfg, "backbone", "extractor graph file"))
    model = load_head(args.model or os.path.join(cfg.output_dir, "model.mchd"))
    sweep = robustness_sweep(model, bb, cfg.pipeline_set(), records,
                             batch_size=cfg.batch)
    out = os.path.join(cfg.output_dir, "robustness.csv")
    _write_csv(out, cfg.stamp_lines(), ["qf", "accuracy"],
               [[qf, "%.6f" % acc] for qf, acc in sweep])
    for qf, acc in sweep:
        print("qf %3d  accuracy %.4f" % (qf, acc))
    print("wrote %s" % out)
    return EXIT_OK


def cmd_tsne(args, cfg):
    records = read_manifest(_need(cfg, "manifest", "dataset manifest"))
    ids, labels, X = _load_features(cfg)
    idx, missing = _split_rows(records, ids, args.split)
    if missing:
        raise TrainingError("features missing for images: %s" % missing[:20])
    Y = tsne_embed(X[idx], perplexity=args.perplexity,
                   iterations=args.iterations, seed=cfg.seed)
    csv_path = os.path.join(cfg.output_dir, "embedding.csv")
    write_embedding_csv(csv_path, Y, labels[idx], header_lines=cfg.stamp_lines())
    write_embedding_svg(os.path.join(cfg.output_dir, "embedding.svg"), Y, labels[idx])
    print("wrote %s (%d points)" % (csv_path, len(Y)))
    return EXIT_OK


def _scale_box(box, from_size, to_size=224):
    fw, fh = from_size
    sx, sy = to_size / fw, to_size / fh
    x = int(box["x"] * sx)
    y = int(box["y"] * sy)
    w = max(1, int(round(box["w"] * sx)))
    h = max(1, int(round(box["h"] * sy)))
    x = min(x, to_size - 1)
    y = min(y, to_size - 1)
    return {"x": x, "y": y, "w": min(w, to_size - x), "h": min(h, to_size - y)}


def cmd_cam(args, cfg):
    records = read_manifest(_need(cfg, "manifest", "dataset manifest"))
    bb = load_backbone(_need(cfg, "backbone", "extractor graph file"))
    model = load_head(args.model or os.path.join(cfg.output_dir, "model.mchd"))
    pipes = cfg.pipeline_set()
    if model.dim != 1280 * len(pipes):
        raise TrainingError("model dimension %d does not match %d branches"
                            % (model.dim, len(pipes)))
    if args.ids:
        wanted = {int(s) for s in args.ids.split(",")}
        targets = [r for r in records if r.image_id in wanted]
    else:
        targets = [r for r in records if r.split == "test"][:args.limit]
    if not targets:
        raise TrainingError("no images selected for heatmaps")
    boxes_by_image = {}
    if args.annotations:
        for rec in _read_predictions(args.annotations, raw=True):
            boxes_by_image.setdefault(int(rec["image_id"]), []).extend(rec.get("boxes", []))
    rows = []
    for r in targets:
        raw_img = imgio.load_image(r.path)
        maps_list, pooled_list = [], []
        for pipe in pipes:
            t = run_pipeline(raw_img, pipe)
            maps, pooled = bb.extract_maps(t.data)
            maps_list.append(maps)
            pooled_list.append(pooled)
        fused = np.concatenate(pooled_list)
        probs, cls = predict(model, fused)
        heat = cam(model, maps_list, cls)
        logit = float(fused @ model.weights[cls] + model.bias[cls])
        identity = float(heat.raw.mean() + model.bias[cls])
        rel = abs(identity - logit) / max(abs(logit), 1e-12)
        save_heatmap_png(heat, os.path.join(cfg.output_dir, "heatmap_%04d.png" % r.image_id))
        over = overlay(heat, imgio.resize(raw_img, 224, 224))
        Image.fromarray(over, "RGB").save(
            os.path.join(cfg.output_dir, "overlay_%04d.png" % r.image_id), format="PNG")
        row = [r.image_id, cls, "%.6g" % logit, "%.3g" % rel]
        if r.image_id in boxes_by_image:
            with Image.open(r.path) as im:
                size = im.size
            scaled = [_scale_box(b, size) for b in boxes_by_image[r.image_id]]
            agr = marking_agreement(heat, scaled)
            row += ["%.6f" % agr.energy_fraction, agr.pointing_hit]
        else:
            row += ["", ""]
        rows.append(row)
    _write_csv(os.path.join(cfg.output_dir, "cam_summary.csv"), cfg.stamp_lines(),
               ["image_id", "class", "logit", "identity_rel_err",
                "energy_fraction", "pointing_hit"], rows)
    print("wrote %d heatmaps to %s" % (len(targets), cfg.output_dir))
    return EXIT_OK


def _read_predictions(path, raw=False):
    """image_id -> label map from a predictions CSV or a study export."""
    if path.endswith(".jsonl"):
        out = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                if "summary" in doc:
                    continue
                out.append(doc)
        if raw:
            return out
        return {int(d["image_id"]): LABEL_TO_INT[d["label"]] for d in out}
    if raw:
        raise UsageError("box annotations need a study export (.jsonl)")
    preds = {}
    with open(path) as f:
        rows = [ln for ln in f if not ln.startswith("#")]
    for row in csv.DictReader(rows):
        label = row["label"].strip()
        if label in LABEL_TO_INT:
            preds[int(row["image_id"])] = LABEL_TO_INT[label]
        else:
            preds[int(row["image_id"])] = int(label)
    return preds


def cmd_significance(args, cfg):
    a = _read_predictions(args.a)
    b = _read_predictions(args.b)
    common = sorted(set(a) & set(b))
    if not common:
        raise TrainingError("the two prediction files share no image ids")
    va = [a[i] for i in common]
    vb = [b[i] for i in common]
    stat, df, p = stuart_maxwell(va, vb)
    _write_csv(os.path.join(cfg.output_dir, "significance.csv"), cfg.stamp_lines(),
               ["n", "statistic", "df", "p_value"],
               [[len(common), "%.10g" % stat, df, "%.10g" % p]])
    print("n=%d statistic=%.6g df=%d p=%.6g" % (len(common), stat, df, p))
    return EXIT_OK


def cmd_psycho_serve(args, cfg):
    study_dir = args.study_dir or cfg.study_dir or os.path.join(cfg.output_dir, "study")
    if args.init or args.init_only:
        records = read_manifest(_need(cfg, "manifest", "study image manifest"))
        images = [{"id": r.image_id, "path": r.path, "label": r.label} for r in records]
        create_study(study_dir, study_id="study", images=images,
                     n_per_session=args.n, seed=cfg.seed)
        print("created study in %s (%d images, %d per session)"
              % (study_dir, len(images), args.n))
        if args.init_only:
            return EXIT_OK
    from .psycho.service import create_app
    import uvicorn
    app = create_app(study_dir)
    print("serving study %r on %s:%d" % (app.state.store.study_id, cfg.host, cfg.port))
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "split": cmd_split,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "robustness": cmd_robustness,
    "tsne": cmd_tsne,
    "cam": cmd_cam,
    "significance": cmd_significance,
    "psycho-serve": cmd_psycho_serve,
}

_DATA_ERRORS = (OSError, ValueError, TrainingError, StudyError,
                BackboneLoadError, fc.CacheFormatError,
                imgio.DecodeError, imgio.RecompressionError)
_NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError,
                   OverflowError)


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        cfg = _resolve_cfg(args)
        return _COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as e:
        print("usage error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as e:
        print("numeric failure: %s" % e, file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as e:
        print("data error: %s" % e, file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
