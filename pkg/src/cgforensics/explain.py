"""Class-activation heatmaps and agreement with human region markings.

With a frozen extractor, global average pooling and a linear head, the
gradient of a class logit with respect to map k is the head weight for
that (branch, channel) pair divided by the map area. The class activation
map is therefore computed exactly as a weighted sum of the final conv
maps, no automatic differentiation involved:

    raw_b(x, y) = sum_k w_bk * A_bk(x, y)        per branch b
    raw(x, y)   = sum_b raw_b(x, y)
    heatmap     = normalize(upsample(max(raw, 0)))

and mean(raw) + bias_c equals the class logit, which the tests check on
every image.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .backbone import FEATURE_DIM, MAP_SIZE
from .head import HeadModel

HEATMAP_SIZE = 224
OVERLAY_ALPHA = 0.4


@dataclass
class Heatmap:
    data: np.ndarray          # 224x224 in [0,1]
    class_id: int
    raw: np.ndarray           # 7x7 combined map, pre-rectification
    branch_raw: np.ndarray    # n_branches x 7x7

    def __post_init__(self):
        if self.data.shape != (HEATMAP_SIZE, HEATMAP_SIZE):
            raise ValueError("heatmap must be %dx%d" % (HEATMAP_SIZE, HEATMAP_SIZE))
        if self.data.min() < 0:
            raise ValueError("heatmap values must be non-negative")
        mx = self.data.max()
        if mx > 0 and abs(mx - 1.0) > 1e-9:
            raise ValueError("nonzero heatmap must be normalized to max 1")


@dataclass
class Agreement:
    energy_fraction: float
    pointing_hit: int
    degenerate: bool = False  # all-zero heatmap; fraction pinned to 0


def _upsample(arr: np.ndarray, size: int) -> np.ndarray:
    im = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.float64)


def cam(m: HeadModel, maps, class_id: int) -> Heatmap:
    """maps: sequence of 7x7x1280 branch stacks, in fusion order."""
    stacks = [np.asarray(s, dtype=np.float64) for s in maps]
    for s in stacks:
        if s.shape != (MAP_SIZE, MAP_SIZE, FEATURE_DIM):
            raise ValueError("branch stack must be %dx%dx%d, got %r"
                             % (MAP_SIZE, MAP_SIZE, FEATURE_DIM, s.shape))
    if m.dim != FEATURE_DIM * len(stacks):
        raise ValueError("head dimension %d does not cover %d branches"
                         % (m.dim, len(stacks)))
    if not 0 <= class_id < m.weights.shape[0]:
        raise ValueError("class id out of range")
    w = m.weights[class_id]
    branch_raw = []
    for bi, s in enumerate(stacks):
        wb = w[bi * FEATURE_DIM:(bi + 1) * FEATURE_DIM]
        branch_raw.append(np.tensordot(s, wb, axes=([2], [0])))
    branch_raw = np.stack(branch_raw)
    raw = branch_raw.sum(axis=0)
    rect = np.maximum(raw, 0.0)
    up = np.maximum(_upsample(rect, HEATMAP_SIZE), 0.0)
    mx = up.max()
    data = up / mx if mx > 0 else np.zeros_like(up)
    return Heatmap(data, class_id, raw, branch_raw)


def _jet(x):
    r = np.clip(1.5 - np.abs(4.0 * x - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * x - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * x - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def overlay(h: Heatmap, img: np.ndarray) -> np.ndarray:
    """Jet-colormapped heatmap alpha-blended onto the image (uint8 out)."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] != h.data.shape:
        raise ValueError("image size %r does not match the heatmap" % (img.shape[:2],))
    color = _jet(h.data) * 255.0
    out = (1.0 - OVERLAY_ALPHA) * img + OVERLAY_ALPHA * color
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _validate_boxes(boxes, shape):
    hh, ww = shape
    out = []
    for box in boxes:
        if isinstance(box, dict):
            x, y, w, bh = box["x"], box["y"], box["w"], box["h"]
        else:
            x, y, w, bh = box
        if w < 1 or bh < 1:
            raise ValueError("box width/height must be >= 1")
        if x < 0 or y < 0 or x + w > ww or y + bh > hh:
            raise ValueError("box %r exceeds the %dx%d frame" % ((x, y, w, bh), ww, hh))
        out.append((int(x), int(y), int(w), int(bh)))
    return out


def marking_agreement(h: Heatmap, boxes) -> Agreement:
    """Energy fraction inside the union of boxes, plus the pointing game."""
    boxes = _validate_boxes(boxes, h.data.shape)
    total = h.data.sum()
    mask = np.zeros(h.data.shape, dtype=bool)
    for x, y, w, bh in boxes:
        mask[y:y + bh, x:x + w] = True
    if total == 0:
        return Agreement(0.0, 0, degenerate=True)
    frac = float(h.data[mask].sum() / total)
    iy, ix = np.unravel_index(int(h.data.argmax()), h.data.shape)
    hit = int(bool(mask[iy, ix]))
    return Agreement(frac, hit)


def save_heatmap_png(h: Heatmap, path):
    gray = np.clip(np.floor(h.data * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path, format="PNG")
