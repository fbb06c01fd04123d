"""JPEG robustness sweep: recompress the test set at each quality factor
and re-evaluate the already-trained model. The qf=100 point is itself a
recompression, so the whole sweep shares one code path."""

import numpy as np

from .. import imgio
from ..head import predict
from ..preprocess import run_pipeline
from .metrics import confusion_matrix, from_matrix


def extract_fused(bb, pipelines, images, batch_size=16):
    """Branch features for a list of raw images, concatenated in pipeline
    order. A single pipeline gives plain 1280-wide features."""
    feats = []
    for cfg in pipelines:
        tensors = [run_pipeline(img, cfg).data for img in images]
        chunks = [bb.extract_batch(np.stack(tensors[i:i + batch_size]))
                  for i in range(0, len(tensors), batch_size)]
        feats.append(np.concatenate(chunks, axis=0))
    return np.concatenate(feats, axis=1)


def robustness_sweep(model, bb, pipelines, records, qfs=None, batch_size=16):
    """Accuracy per quality factor over a list of test manifest records.

    The model is never retrained here; only the images change. Returns a
    list of (qf, accuracy) in sweep order.
    """
    if qfs is None:
        qfs = imgio.sweep_quality_factors()
    records = list(records)
    if not records:
        raise ValueError("robustness sweep needs a nonempty test manifest")
    originals = [imgio.load_image(r.path) for r in records]
    truth = np.array([r.label for r in records], dtype=np.int64)
    out = []
    for qf in qfs:
        imgs = [imgio.jpeg_recompress(img, qf) for img in originals]
        X = extract_fused(bb, pipelines, imgs, batch_size)
        _, pred = predict(model, X)
        res = from_matrix(confusion_matrix(truth, pred))
        out.append((qf, res.total))
    return out
