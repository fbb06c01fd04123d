"""Deterministic mini-corpus generator for the bundled smoke tests.

Three visually distinct classes, all redistributable:
  Real      224x224 crops of the public photographs bundled with
            scikit-image (required only for this generator).
  Graphics  procedurally rendered scenes (gradients, flat-shaded shapes).
  GAN       outputs of a seeded random-weight transposed-convolution
            generator, upsampled from a 7x7 latent grid, which leaves the
            checkerboard texture typical of generator upsampling.

Everything is seeded, so two runs produce byte-identical PNG files and the
corpus does not need to live in the repository.
"""

import argparse
import os

import numpy as np
from PIL import Image, ImageDraw

from .evalkit.splits import ManifestRecord, write_manifest

SIZE = 224
LABEL_GAN, LABEL_GRAPHICS, LABEL_REAL = 0, 1, 2

_REAL_SOURCES = {
    "photo_scene": ("astronaut", "rocket", "coffee", "hubble_deep_field"),
    "photo_closeup": ("chelsea", "cat", "immunohistochemistry", "retina"),
}


def _real_image(rng, category):
    from skimage import data as skdata
    names = _REAL_SOURCES[category]
    src = getattr(skdata, names[rng.integers(len(names))])()
    if src.ndim == 2:
        src = np.stack([src] * 3, axis=-1)
    src = src[..., :3]
    h, w = src.shape[:2]
    if h < SIZE or w < SIZE:
        raise RuntimeError("source image smaller than %d" % SIZE)
    y = int(rng.integers(0, h - SIZE + 1))
    x = int(rng.integers(0, w - SIZE + 1))
    crop = src[y:y + SIZE, x:x + SIZE]
    if rng.random() < 0.5:
        crop = crop[:, ::-1]
    return np.ascontiguousarray(crop, dtype=np.uint8)


def _gradient_background(rng):
    c0 = rng.integers(0, 256, size=3).astype(np.float64)
    c1 = rng.integers(0, 256, size=3).astype(np.float64)
    t = np.linspace(0.0, 1.0, SIZE)[:, None]
    rows = c0[None, :] * (1 - t) + c1[None, :] * t
    return np.repeat(rows[:, None, :], SIZE, axis=1)


def _graphics_image(rng, category):
    bg = _gradient_background(rng)
    img = Image.fromarray(np.clip(bg, 0, 255).astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(img)
    if category == "render_shapes":
        for _ in range(int(rng.integers(6, 14))):
            color = tuple(int(v) for v in rng.integers(0, 256, size=3))
            x0, y0 = rng.integers(0, SIZE - 20, size=2)
            w, h = rng.integers(15, 110, size=2)
            kind = rng.integers(3)
            box = (int(x0), int(y0), int(min(x0 + w, SIZE - 1)), int(min(y0 + h, SIZE - 1)))
            if kind == 0:
                draw.ellipse(box, fill=color)
            elif kind == 1:
                draw.rectangle(box, fill=color)
            else:
                cx, cy = (box[0] + box[2]) // 2, box[1]
                draw.polygon([(box[0], box[3]), (box[2], box[3]), (cx, cy)], fill=color)
    else:  # render_scene: horizon, sun disc, blocky skyline
        horizon = int(rng.integers(90, 170))
        ground = tuple(int(v) for v in rng.integers(0, 256, size=3))
        draw.rectangle((0, horizon, SIZE - 1, SIZE - 1), fill=ground)
        sun = tuple(int(v) for v in rng.integers(150, 256, size=3))
        sx, sy, sr = int(rng.integers(20, 200)), int(rng.integers(15, 70)), int(rng.integers(10, 26))
        draw.ellipse((sx - sr, sy - sr, sx + sr, sy + sr), fill=sun)
        x = 0
        while x < SIZE:
            bw = int(rng.integers(18, 40))
            bh = int(rng.integers(20, horizon - 10))
            shade = tuple(int(v) for v in rng.integers(30, 220, size=3))
            draw.rectangle((x, horizon - bh, min(x + bw, SIZE - 1), horizon), fill=shade)
            x += bw + int(rng.integers(2, 12))
    return np.asarray(img, dtype=np.uint8)


def _conv_same(x, w):
    # x: (C,H,W), w: (Cout,C,3,3); zero padding, stride 1
    from .onnxlite import _conv2d
    return _conv2d(x[None], w, None, [1, 1], [1, 1, 1, 1], 1)[0]


def _gan_image(rng, category):
    # weights seeded per category so each "generator" has its own texture
    wseed = 11 if category == "gen_blobs" else 23
    wrng = np.random.default_rng([wseed])
    ch = 16
    n_up = 4  # 7 -> 112
    ws = [wrng.normal(0, np.sqrt(2.0 / (ch * 9)), size=(ch, ch, 3, 3)) for _ in range(n_up)]
    w_in = wrng.normal(0, np.sqrt(2.0 / 9), size=(ch, ch, 3, 3))
    w_out = wrng.normal(0, np.sqrt(2.0 / ch), size=(3, ch, 1, 1))

    def leaky(v):
        return np.where(v > 0, v, 0.1 * v)

    x = rng.normal(0.0, 1.0, size=(ch, 7, 7))
    x = leaky(_conv_same(x, w_in))
    for w in ws:
        c, h, wd = x.shape
        up = np.zeros((c, h * 2, wd * 2))
        up[:, ::2, ::2] = x  # zero-insertion upsampling, the artifact source
        x = leaky(_conv_same(up, w))
    rgb = np.tensordot(w_out[:, :, 0, 0], x, axes=([1], [0]))
    lo = rgb.min(axis=(1, 2), keepdims=True)
    hi = rgb.max(axis=(1, 2), keepdims=True)
    span = np.where(hi - lo == 0, 1.0, hi - lo)
    rgb = (rgb - lo) / span * 255.0
    img = np.floor(rgb + 0.5).astype(np.uint8).transpose(1, 2, 0)
    out = Image.fromarray(img, "RGB").resize((SIZE, SIZE), Image.BILINEAR)
    return np.asarray(out, dtype=np.uint8)


_CLASS_PLAN = (
    (LABEL_GAN, ("gen_blobs", "gen_warped"), _gan_image),
    (LABEL_GRAPHICS, ("render_shapes", "render_scene"), _graphics_image),
    (LABEL_REAL, ("photo_scene", "photo_closeup"), _real_image),
)


def generate(out_dir, per_class=40, seed=0):
    """Write images plus manifest.csv; returns the manifest path."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    records = []
    image_id = 1
    for label, categories, maker in _CLASS_PLAN:
        for i in range(per_class):
            category = categories[i % len(categories)]
            rng = np.random.default_rng([seed, label, i])
            arr = maker(rng, category)
            path = os.path.join(img_dir, "img%04d.png" % image_id)
            Image.fromarray(arr, "RGB").save(path, format="PNG")
            records.append(ManifestRecord(image_id, path, label, category))
            image_id += 1
    manifest = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest, records)
    return manifest


def main(argv=None):
    ap = argparse.ArgumentParser(description="generate the bundled demo corpus")
    ap.add_argument("out_dir")
    ap.add_argument("--per-class", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    manifest = generate(args.out_dir, args.per_class, args.seed)
    print(manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
