"""Colorspace transforms and per-channel min-max rescaling.

Eleven spaces are supported: RGB, HLS, HSV, LAB, LCH, XYZ, YCbCr, YDbDr,
YIQ, YPbPr, YUV. Conventions are pinned here once and used everywhere:

  sRGB     IEC 61966-2-1 nonlinearity (linear below 0.04045/12.92 encoded).
  XYZ      linear-sRGB matrix below, scaled so that Y of white is 100.
  white    the matrix image of RGB (1,1,1), i.e. the row sums. Using the
           rounded CIE D65 constants instead would leave a few 1e-3 of
           residual chroma on achromatic pixels.
  LAB      CIE 1976, eps = 216/24389, kappa = 24389/27.
  LCH      cylindrical CIELAB: C = hypot(a,b), H = atan2(b,a) in degrees.
  YCbCr    BT.601 full-range (JFIF), 8-bit offsets 0/128/128.
  YUV/YIQ/YPbPr/YDbDr  analog matrix definitions on [0,1] RGB.
  HSV/HLS  hexcone model, H in degrees [0,360), S/V/L in [0,1].

All transforms take RGB samples in [0,255] and are exactly achromatic-safe:
gray inputs give zero chroma/saturation channels bit-exactly.
"""

from dataclasses import dataclass, field, replace

import numpy as np

NATIVE = "native"
RESCALED = "rescaled_0_255"

# Table order is the branch-id convention of the feature cache format.
COLORSPACES = ("RGB", "HLS", "HSV", "LAB", "LCH", "XYZ",
               "YCbCr", "YDbDr", "YIQ", "YPbPr", "YUV")

SRGB_TO_XYZ = np.array([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
])
# White point = matrix image of (1,1,1); keeps achromatic pixels at a=b=0.
WHITE_XYZ = SRGB_TO_XYZ.sum(axis=1)

LAB_EPS = 216.0 / 24389.0
LAB_KAPPA = 24389.0 / 27.0

YCBCR_FWD = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
YCBCR_OFFSET = np.array([0.0, 128.0, 128.0])

YUV_FWD = np.array([
    [0.299, 0.587, 0.114],
    [-0.14714119, -0.28886916, 0.43601035],
    [0.61497538, -0.51496512, -0.10001026],
])
YIQ_FWD = np.array([
    [0.299, 0.587, 0.114],
    [0.59590059, -0.27455667, -0.32134392],
    [0.21153661, -0.52273617, 0.31119955],
])
YPBPR_FWD = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
YDBDR_FWD = np.array([
    [0.299, 0.587, 0.114],
    [-0.45, -0.883, 1.333],
    [-1.333, 1.116, 0.217],
])

_ANALOG = {"YUV": YUV_FWD, "YIQ": YIQ_FWD, "YPbPr": YPBPR_FWD, "YDbDr": YDBDR_FWD}


@dataclass
class ImageTensor:
    """H x W x 3 float image with a colorspace tag and declared range."""
    data: np.ndarray
    space: str
    range_tag: str = NATIVE

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("ImageTensor wants H x W x 3, got %r" % (self.data.shape,))
        if self.space not in COLORSPACES:
            raise ValueError("unknown colorspace %r" % (self.space,))
        if self.range_tag not in (NATIVE, RESCALED):
            raise ValueError("unknown range tag %r" % (self.range_tag,))


def from_raw(img) -> ImageTensor:
    """Wrap a uint8 RGB image as an ImageTensor (values stay 0-255)."""
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64)
    return ImageTensor(arr, "RGB", NATIVE)


def _srgb_to_linear(c):
    # c in [0,1]
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _rgb_to_xyz100(rgb01):
    lin = _srgb_to_linear(rgb01)
    return lin @ SRGB_TO_XYZ.T * 100.0


def _xyz100_to_rgb255(xyz):
    lin = (xyz / 100.0) @ np.linalg.inv(SRGB_TO_XYZ).T
    return np.clip(_linear_to_srgb(lin) * 255.0, 0.0, 255.0)


def _xyz_to_lab(xyz100, gray_mask=None):
    t = xyz100 / (WHITE_XYZ * 100.0)
    f = np.where(t > LAB_EPS, np.cbrt(t), (LAB_KAPPA * t + 16.0) / 116.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    L = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    if gray_mask is not None:
        # achromatic pixels have a = b = 0 by definition; the matmul route
        # leaves ~1e-14 residue that per-image rescaling would amplify
        a = np.where(gray_mask, 0.0, a)
        b = np.where(gray_mask, 0.0, b)
    return np.stack([L, a, b], axis=-1)


def _lab_to_xyz(lab):
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f ** 3 > LAB_EPS, f ** 3, (116.0 * f - 16.0) / LAB_KAPPA)
    return t * (WHITE_XYZ * 100.0)


def _gray_mask(rgb):
    return (rgb[..., 0] == rgb[..., 1]) & (rgb[..., 1] == rgb[..., 2])


def _hue_degrees(r, g, b, maxc, delta):
    # delta == 0 rows produce H = 0; the np.select default covers them.
    safe = np.where(delta == 0.0, 1.0, delta)
    h = np.select(
        [delta == 0.0, maxc == r, maxc == g],
        [np.zeros_like(r),
         ((g - b) / safe) % 6.0,
         (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    )
    return h * 60.0


def _rgb_to_hsv(rgb01):
    r, g, b = rgb01[..., 0], rgb01[..., 1], rgb01[..., 2]
    maxc = np.max(rgb01, axis=-1)
    minc = np.min(rgb01, axis=-1)
    delta = maxc - minc
    h = _hue_degrees(r, g, b, maxc, delta)
    s = np.where(maxc > 0.0, delta / np.where(maxc == 0.0, 1.0, maxc), 0.0)
    return np.stack([h, s, maxc], axis=-1)


def _hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h / 60.0) % 6.0
    i = np.floor(h6)
    f = h6 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    conds = [i == 0, i == 1, i == 2, i == 3, i == 4]
    r = np.select(conds, [v, q, p, p, t], default=v)
    g = np.select(conds, [t, v, v, q, p], default=p)
    b = np.select(conds, [p, p, t, v, v], default=q)
    return np.stack([r, g, b], axis=-1)


def _rgb_to_hls(rgb01):
    r, g, b = rgb01[..., 0], rgb01[..., 1], rgb01[..., 2]
    maxc = np.max(rgb01, axis=-1)
    minc = np.min(rgb01, axis=-1)
    delta = maxc - minc
    h = _hue_degrees(r, g, b, maxc, delta)
    l = (maxc + minc) / 2.0
    denom = 1.0 - np.abs(2.0 * l - 1.0)
    s = np.where(delta == 0.0, 0.0, delta / np.where(denom == 0.0, 1.0, denom))
    return np.stack([h, l, s], axis=-1)


def _hls_to_rgb(hls):
    h, l, s = hls[..., 0], hls[..., 1], hls[..., 2]
    c = (1.0 - np.abs(2.0 * l - 1.0)) * s
    h6 = (h / 60.0) % 6.0
    x = c * (1.0 - np.abs(h6 % 2.0 - 1.0))
    m = l - c / 2.0
    i = np.floor(h6)
    conds = [i == 0, i == 1, i == 2, i == 3, i == 4]
    z = np.zeros_like(c)
    r = np.select(conds, [c, x, z, z, x], default=c)
    g = np.select(conds, [x, c, c, x, z], default=z)
    b = np.select(conds, [z, z, x, c, c], default=x)
    return np.stack([r + m, g + m, b + m], axis=-1)


def transform(img: ImageTensor, target: str) -> ImageTensor:
    """Convert an RGB tensor (0-255) to the target space's native units."""
    if img.space != "RGB":
        raise ValueError("transform expects an RGB source, got %s" % img.space)
    if target not in COLORSPACES:
        raise ValueError("unknown target colorspace %r" % (target,))
    if target == "RGB":
        return img
    rgb255 = img.data
    rgb01 = rgb255 / 255.0
    if target == "HSV":
        out = _rgb_to_hsv(rgb01)
    elif target == "HLS":
        out = _rgb_to_hls(rgb01)
    elif target == "XYZ":
        out = _rgb_to_xyz100(rgb01)
    elif target == "LAB":
        out = _xyz_to_lab(_rgb_to_xyz100(rgb01), _gray_mask(rgb255))
    elif target == "LCH":
        lab = _xyz_to_lab(_rgb_to_xyz100(rgb01), _gray_mask(rgb255))
        L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
        C = np.hypot(a, b)
        H = np.degrees(np.arctan2(b, a)) % 360.0
        out = np.stack([L, C, H], axis=-1)
    elif target == "YCbCr":
        out = rgb255 @ YCBCR_FWD.T + YCBCR_OFFSET
    else:
        out = rgb01 @ _ANALOG[target].T
    return ImageTensor(out, target, NATIVE)


def inverse_transform(img: ImageTensor) -> ImageTensor:
    """Back to RGB 0-255; out-of-gamut values are clamped on return."""
    if img.range_tag != NATIVE:
        raise ValueError("inverse_transform needs native-range input")
    space, data = img.space, img.data
    if space == "RGB":
        return img
    if space == "HSV":
        rgb01 = _hsv_to_rgb(data)
    elif space == "HLS":
        rgb01 = _hls_to_rgb(data)
    elif space == "XYZ":
        return ImageTensor(_xyz100_to_rgb255(data), "RGB", NATIVE)
    elif space == "LAB":
        return ImageTensor(_xyz100_to_rgb255(_lab_to_xyz(data)), "RGB", NATIVE)
    elif space == "LCH":
        L, C, H = data[..., 0], data[..., 1], data[..., 2]
        hr = np.radians(H)
        lab = np.stack([L, C * np.cos(hr), C * np.sin(hr)], axis=-1)
        return ImageTensor(_xyz100_to_rgb255(_lab_to_xyz(lab)), "RGB", NATIVE)
    elif space == "YCbCr":
        rgb255 = (data - YCBCR_OFFSET) @ np.linalg.inv(YCBCR_FWD).T
        return ImageTensor(np.clip(rgb255, 0.0, 255.0), "RGB", NATIVE)
    else:
        rgb01 = data @ np.linalg.inv(_ANALOG[space]).T
    return ImageTensor(np.clip(rgb01 * 255.0, 0.0, 255.0), "RGB", NATIVE)


def rescale_0_255(img: ImageTensor) -> ImageTensor:
    """Per-channel min-max rescale to integer [0,255].

    out = round((v - min) / (max - min) * 255) with round-half-up; a channel
    whose max equals its min maps to all zeros.
    """
    data = img.data
    mins = data.min(axis=(0, 1))
    maxs = data.max(axis=(0, 1))
    span = maxs - mins
    safe = np.where(span == 0.0, 1.0, span)
    scaled = (data - mins) / safe * 255.0
    out = np.floor(scaled + 0.5)
    out = np.where(span == 0.0, 0.0, out)
    out = np.clip(out, 0.0, 255.0)
    return ImageTensor(out, img.space, RESCALED)
