"""Forensic classification of natural, GAN-generated and computer-graphics
images via colorspace-fused features from a frozen backbone.

Label convention used everywhere: 0 = GAN, 1 = Graphics, 2 = Real.
"""

__version__ = "0.1.0"

LABEL_GAN = 0
LABEL_GRAPHICS = 1
LABEL_REAL = 2

LABEL_NAMES = {LABEL_GAN: "GAN", LABEL_GRAPHICS: "Graphics", LABEL_REAL: "Real"}
NAME_LABELS = {v: k for k, v in LABEL_NAMES.items()}
