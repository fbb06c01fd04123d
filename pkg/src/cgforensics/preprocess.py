"""Per-branch pre-processing pipelines and the Laplacian-of-Gaussian
residual block.

A pipeline is: resize to 224x224 -> colorspace transform -> optional
per-channel rescale to [0,255] -> optional LoG residual. The RGB branch is
fed raw 0-255 pixels with neither rescaling nor residual.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import colorspace as cs
from . import imgio

INPUT_SIZE = 224


@dataclass(frozen=True)
class LoGConfig:
    sigma: float = 1.0
    kernel_size: int = 5

    def __post_init__(self):
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 3")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def log_kernel(cfg: LoGConfig) -> np.ndarray:
    """Discrete 2-D Laplacian-of-Gaussian, centered so entries sum to 0.

    -1/(pi*s^4) * (1 - r^2/(2 s^2)) * exp(-r^2/(2 s^2)) sampled on the
    kernel grid, mean-subtracted, then snapped to multiples of 2**-40 with
    the rounding residue folded into the center tap. On that grid the sum
    is exactly 0.0 and every product with an 8-bit pixel value is exact in
    double precision, so a constant image is a true fixed point of the
    residual, not merely one up to rounding noise.
    """
    k = cfg.kernel_size
    s2 = cfg.sigma ** 2
    half = k // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    r2 = x * x + y * y
    kern = -1.0 / (math.pi * s2 * s2) * (1.0 - r2 / (2.0 * s2)) * np.exp(-r2 / (2.0 * s2))
    kern -= kern.mean()
    scale = 2.0 ** 40
    kern = np.round(kern * scale) / scale
    kern[half, half] -= kern.sum()
    return kern


def log_residual(img: cs.ImageTensor, cfg: LoGConfig = LoGConfig()) -> cs.ImageTensor:
    """out = clamp(img + LoG(img), 0, 255), per channel, reflect padding."""
    if img.range_tag != cs.RESCALED:
        raise ValueError("log_residual sits after rescaling; input must be rescaled_0_255")
    kern = log_kernel(cfg)
    out = np.empty_like(img.data)
    for c in range(3):
        resp = ndimage.convolve(img.data[:, :, c], kern, mode="reflect")
        out[:, :, c] = img.data[:, :, c] + resp
    out = np.clip(out, 0.0, 255.0)
    return cs.ImageTensor(out, img.space, cs.RESCALED)


@dataclass(frozen=True)
class PipelineConfig:
    branch: str
    space: str
    apply_rescale: bool
    apply_log_residual: bool
    log: LoGConfig = field(default_factory=LoGConfig)

    def __post_init__(self):
        if self.space not in cs.COLORSPACES:
            raise ValueError("unknown colorspace %r" % (self.space,))
        if self.space == "RGB" and (self.apply_rescale or self.apply_log_residual):
            raise ValueError("the RGB branch is fed raw; rescale/residual not allowed")
        if self.apply_log_residual and not self.apply_rescale:
            raise ValueError("the residual block sits after rescaling")


def mc_branches(log_cfg: LoGConfig = LoGConfig(), residual: bool = True):
    """The three fusion branches, in cache order RGB, LCH, HSV.

    residual=False gives the first-generation fused variant (rescale only),
    so both models of the compression study are runnable.
    """
    return [
        PipelineConfig("RGB", "RGB", False, False, log_cfg),
        PipelineConfig("LCH", "LCH", True, residual, log_cfg),
        PipelineConfig("HSV", "HSV", True, residual, log_cfg),
    ]


def sc_branch(space: str, rescale=None, log_cfg: LoGConfig = LoGConfig()):
    """Single-colorspace variant. Non-RGB spaces default to rescaling."""
    if rescale is None:
        rescale = space != "RGB"
    return PipelineConfig(space, space, bool(rescale), False, log_cfg)


def run_pipeline(raw: np.ndarray, cfg: PipelineConfig) -> cs.ImageTensor:
    """Full branch pipeline over one raw image.

    Output is always 224x224x3 with values in [0,255]; a non-rescaled
    non-RGB branch has its native values clamped into that range.
    """
    img = imgio.resize(np.asarray(raw, dtype=np.uint8), INPUT_SIZE, INPUT_SIZE)
    t = cs.transform(cs.from_raw(img), cfg.space)
    if cfg.apply_rescale:
        t = cs.rescale_0_255(t)
    if cfg.apply_log_residual:
        t = log_residual(t, cfg.log)
    if not cfg.apply_rescale and cfg.space != "RGB":
        t = cs.ImageTensor(np.clip(t.data, 0.0, 255.0), t.space, t.range_tag)
    return t
