"""Freeze golden colorspace vectors computed by independent code paths.

The library converts images with vectorized numpy. This script produces the
expected values a different way for each family and writes them to
tests/data/golden_colorspace.csv, which the test suite then compares against:

  HSV, HLS                      stdlib colorsys (hue scaled to degrees)
  YUV, YIQ, YPbPr, YDbDr        skimage.color on a 1x1 float image
  XYZ, LAB, LCH, YCbCr          longhand scalar arithmetic, no numpy

Run from the repository root: python3 tools/gen_golden_vectors.py
The output file is committed; regenerate only when a conversion is
deliberately repinned.
"""

import colorsys
import csv
import math
import os

import numpy as np
from skimage import color as skcolor

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "tests", "data", "golden_colorspace.csv")

M = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
]
WHITE = [sum(row) for row in M]
EPS = 216.0 / 24389.0
KAPPA = 24389.0 / 27.0


def srgb_inv(u):
    if u <= 0.04045:
        return u / 12.92
    return math.pow((u + 0.055) / 1.055, 2.4)


def xyz100(r, g, b):
    lin = [srgb_inv(r / 255.0), srgb_inv(g / 255.0), srgb_inv(b / 255.0)]
    return [100.0 * sum(M[i][j] * lin[j] for j in range(3)) for i in range(3)]


def lab(r, g, b):
    if r == g == b:
        xyz = xyz100(r, g, b)
        t = xyz[1] / (WHITE[1] * 100.0)
        f = t ** (1.0 / 3.0) if t > EPS else (KAPPA * t + 16.0) / 116.0
        return [116.0 * f - 16.0, 0.0, 0.0]
    out = []
    xyz = xyz100(r, g, b)
    for i in range(3):
        t = xyz[i] / (WHITE[i] * 100.0)
        out.append(t ** (1.0 / 3.0) if t > EPS else (KAPPA * t + 16.0) / 116.0)
    fx, fy, fz = out
    return [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]


def lch(r, g, b):
    L, a, bb = lab(r, g, b)
    C = math.hypot(a, bb)
    H = math.degrees(math.atan2(bb, a)) % 360.0
    return [L, C, H]


def ycbcr(r, g, b):
    return [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418688 * g - 0.081312 * b + 128.0,
    ]


def analog(fn, r, g, b):
    img = np.array([[[r, g, b]]], dtype=np.float64) / 255.0
    return [float(v) for v in fn(img)[0, 0]]


def convert(space, r, g, b):
    if space == "HSV":
        h, s, v = colorsys.rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0)
        return [h * 360.0, s, v]
    if space == "HLS":
        h, l, s = colorsys.rgb_to_hls(r / 255.0, g / 255.0, b / 255.0)
        return [h * 360.0, l, s]
    if space == "XYZ":
        return xyz100(r, g, b)
    if space == "LAB":
        return lab(r, g, b)
    if space == "LCH":
        return lch(r, g, b)
    if space == "YCbCr":
        return ycbcr(r, g, b)
    return analog({
        "YUV": skcolor.rgb2yuv,
        "YIQ": skcolor.rgb2yiq,
        "YPbPr": skcolor.rgb2ypbpr,
        "YDbDr": skcolor.rgb2ydbdr,
    }[space], r, g, b)


def sample_points():
    pts = [(0, 0, 0), (255, 255, 255), (255, 0, 0), (0, 255, 0), (0, 0, 255),
           (255, 255, 0), (255, 0, 255), (0, 255, 255),
           (128, 128, 128), (1, 1, 1), (254, 254, 254), (13, 13, 13),
           (255, 128, 0), (128, 0, 255), (10, 200, 30)]
    rng = np.random.default_rng(20240614)
    pts += [tuple(int(v) for v in rng.integers(0, 256, 3)) for _ in range(30)]
    return pts


SPACES = ["HLS", "HSV", "LAB", "LCH", "XYZ", "YCbCr", "YDbDr", "YIQ", "YPbPr", "YUV"]


def main():
    rows = []
    for r, g, b in sample_points():
        for space in SPACES:
            c1, c2, c3 = convert(space, r, g, b)
            rows.append([r, g, b, space, "%.12g" % c1, "%.12g" % c2, "%.12g" % c3])
    with open(OUT, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rgb_r", "rgb_g", "rgb_b", "space", "c1", "c2", "c3"])
        w.writerows(rows)
    print("wrote %s (%d rows)" % (os.path.normpath(OUT), len(rows)))


if __name__ == "__main__":
    main()
