"""Image decoding, resizing and JPEG recompression.

All images are handled as H x W x 3 uint8 arrays (sRGB, row-major).
Grayscale sources are expanded to three identical channels, alpha is dropped.
"""

import io
import os

import numpy as np
from PIL import Image

SWEEP_QUALITY_FACTORS = (100, 90, 80, 70, 60, 50, 40, 30, 20, 10)


class DecodeError(Exception):
    pass


class RecompressionError(Exception):
    pass


def _to_rgb_array(pil_img) -> np.ndarray:
    if pil_img.mode != "RGB":
        pil_img = pil_img.convert("RGB")
    arr = np.asarray(pil_img, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DecodeError("decoded image is not 3-channel")
    return arr


def load_image(path) -> np.ndarray:
    """Decode a PNG or JPEG file into an H x W x 3 uint8 array."""
    if not os.path.isfile(path):
        raise IOError("no such file: %s" % path)
    try:
        with Image.open(path) as im:
            im.load()
            fmt = im.format
            arr = _to_rgb_array(im)
    except (FileNotFoundError, PermissionError):
        raise
    except Exception as e:
        # PIL decode errors subclass OSError, so wrap everything else
        raise DecodeError("cannot decode %s: %s" % (path, e))
    if fmt not in ("PNG", "JPEG"):
        raise DecodeError("unsupported format %r for %s" % (fmt, path))
    return arr


def resize(img: np.ndarray, w: int, h: int) -> np.ndarray:
    """Bilinear resize to exactly w x h. Same-size targets return the input
    untouched so a 224x224 source stays bit-identical."""
    if w < 1 or h < 1:
        raise ValueError("target size must be >= 1")
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.shape[1] == w and img.shape[0] == h:
        return img
    out = Image.fromarray(img, "RGB").resize((w, h), Image.BILINEAR)
    return np.asarray(out, dtype=np.uint8)


def jpeg_recompress(img: np.ndarray, qf: int) -> np.ndarray:
    """Encode to JPEG at quality qf and decode back.

    Chroma subsampling is pinned: 4:4:4 at qf >= 95, 4:2:0 below, so that
    sweep results are reproducible across installations.
    """
    if not (1 <= int(qf) <= 100):
        raise ValueError("quality factor out of [1,100]: %r" % (qf,))
    qf = int(qf)
    subsampling = 0 if qf >= 95 else 2
    try:
        buf = io.BytesIO()
        Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").save(
            buf, format="JPEG", quality=qf, subsampling=subsampling)
        buf.seek(0)
        with Image.open(buf) as back:
            out = _to_rgb_array(back)
    except (ValueError, OSError) as e:
        raise RecompressionError(str(e))
    if out.shape != img.shape:
        raise RecompressionError("recompression changed dimensions")
    return out


def jpeg_encoded_size(img: np.ndarray, qf: int) -> int:
    """Byte size of the JPEG encoding at quality qf (same codec settings as
    jpeg_recompress)."""
    qf = int(qf)
    subsampling = 0 if qf >= 95 else 2
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").save(
        buf, format="JPEG", quality=qf, subsampling=subsampling)
    return buf.getbuffer().nbytes


def sweep_quality_factors():
    """The robustness sweep grid: 100 down to 10 in steps of 10."""
    return list(SWEEP_QUALITY_FACTORS)


def size_inversions(img: np.ndarray, qfs=None):
    """Count inversions of the encoded-size monotonicity over a qf sweep.

    Sizes should be non-increasing as qf decreases; codecs occasionally
    produce one inversion, which callers may tolerate but should report.
    """
    if qfs is None:
        qfs = sweep_quality_factors()
    sizes = [jpeg_encoded_size(img, q) for q in qfs]
    inversions = sum(1 for a, b in zip(sizes, sizes[1:]) if b > a)
    return inversions, sizes
