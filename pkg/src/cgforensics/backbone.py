"""Frozen feature extractor loaded from an ONNX graph file.

Contract of the graph: input [N,3,224,224] taking raw 0-255 values (any
input normalization must live inside the graph), two outputs: the final
convolutional activation maps [N,1280,7,7] and the pooled feature
[N,1280]. Conversion of a public pretrained checkpoint into this form is a
documented offline step; tests run against structurally identical graphs.
"""

import numpy as np

from . import onnxlite

FEATURE_DIM = 1280
MAP_SIZE = 7
INPUT_SIZE = 224


class BackboneLoadError(Exception):
    """Model file fails the declared input/output spec."""


class Backbone:
    def __init__(self, executor, input_name, maps_name, pooled_name, path):
        self._ex = executor
        self._input = input_name
        self._maps = maps_name
        self._pooled = pooled_name
        self.path = path

    # img: H x W x 3, values 0-255 (an ImageTensor's .data or a plain array)
    def _to_batch(self, imgs):
        arr = np.asarray(imgs, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[1:] != (INPUT_SIZE, INPUT_SIZE, 3):
            raise ValueError("backbone input must be %dx%dx3, got %r"
                             % (INPUT_SIZE, INPUT_SIZE, arr.shape))
        if arr.min() < -1e-6 or arr.max() > 255.0 + 1e-6:
            raise ValueError("backbone input values must lie in [0,255]")
        return arr.transpose(0, 3, 1, 2)

    def extract_batch(self, imgs) -> np.ndarray:
        x = self._to_batch(imgs)
        out = self._ex.run({self._input: x})
        pooled = out[self._pooled].reshape(x.shape[0], FEATURE_DIM)
        return pooled.astype(np.float32)

    def extract(self, img) -> np.ndarray:
        return self.extract_batch([_data(img)])[0]

    def extract_maps(self, img):
        x = self._to_batch([_data(img)])
        out = self._ex.run({self._input: x})
        maps = out[self._maps].reshape(FEATURE_DIM, MAP_SIZE, MAP_SIZE)
        pooled = out[self._pooled].reshape(FEATURE_DIM)
        return maps.transpose(1, 2, 0).astype(np.float32), pooled.astype(np.float32)


def _data(img):
    return img.data if hasattr(img, "data") else img


def _static_dims(shape):
    if shape is None:
        return None
    return tuple(d if isinstance(d, int) else None for d in shape)


def load_backbone(model_file) -> Backbone:
    """Load and validate a serialized extractor graph.

    Raises BackboneLoadError naming the first unmet requirement. Probes run
    one synthetic image through the graph at load time, so a structurally
    plausible but mis-exported graph (wrong pooling tap, normalization
    expecting 0-1 inputs) is rejected here, not at extraction time.
    """
    try:
        model = onnxlite.load_model(model_file)
    except (OSError, onnxlite.OnnxFormatError) as e:
        raise BackboneLoadError("cannot load graph: %s" % e)
    g = model.graph

    feed_inputs = [vi for vi in g.inputs if vi.name not in g.initializers]
    if len(feed_inputs) != 1:
        raise BackboneLoadError("expected exactly one graph input, found %d" % len(feed_inputs))
    vin = feed_inputs[0]
    din = _static_dims(vin.shape)
    if din is None or len(din) != 4 or din[1:] != (3, INPUT_SIZE, INPUT_SIZE):
        raise BackboneLoadError(
            "graph input must be [N,3,%d,%d], declared %r" % (INPUT_SIZE, INPUT_SIZE, vin.shape))

    if len(g.outputs) != 2:
        raise BackboneLoadError("graph must declare exactly 2 outputs (maps, pooled)")
    maps_name = pooled_name = None
    for vo in g.outputs:
        d = _static_dims(vo.shape) or ()
        if len(d) == 4:
            if d[1:] != (FEATURE_DIM, MAP_SIZE, MAP_SIZE):
                raise BackboneLoadError(
                    "maps output must be [N,%d,%d,%d], declared %r"
                    % (FEATURE_DIM, MAP_SIZE, MAP_SIZE, vo.shape))
            maps_name = vo.name
        elif len(d) == 2:
            if d[1] != FEATURE_DIM:
                raise BackboneLoadError(
                    "pooled output width must be %d, declared %r" % (FEATURE_DIM, vo.shape))
            pooled_name = vo.name
    if maps_name is None or pooled_name is None:
        raise BackboneLoadError("graph must expose one 4-d maps output and one 2-d pooled output")

    try:
        ex = onnxlite.Executor(model)
    except onnxlite.UnsupportedOpError as e:
        raise BackboneLoadError(str(e))

    b = Backbone(ex, vin.name, maps_name, pooled_name, str(model_file))
    _probe(b)
    return b


def _probe(b: Backbone):
    rng = np.random.default_rng(20210817)
    img = rng.uniform(0.0, 255.0, size=(INPUT_SIZE, INPUT_SIZE, 3))
    x = img.transpose(2, 0, 1)[None]
    out = b._ex.run({b._input: x})
    maps = out[b._maps]
    pooled = out[b._pooled]
    if maps.shape[1:] != (FEATURE_DIM, MAP_SIZE, MAP_SIZE):
        raise BackboneLoadError("probe: maps came out %r" % (maps.shape,))
    if pooled.reshape(maps.shape[0], -1).shape[1] != FEATURE_DIM:
        raise BackboneLoadError("probe: pooled width is not %d" % FEATURE_DIM)
    if not np.isfinite(maps).all() or not np.isfinite(pooled).all():
        raise BackboneLoadError("probe: non-finite activations")
    if maps.min() < 0:
        raise BackboneLoadError("probe: maps are negative; tap point is not post-activation")
    gap = maps.mean(axis=(2, 3))
    if np.abs(gap - pooled.reshape(gap.shape)).max() > 1e-4:
        raise BackboneLoadError("probe: pooled output is not the spatial mean of the maps")
    # the same image fed as 0-255 and as 0-1 must extract differently,
    # otherwise the graph is scale-blind and its normalization is suspect
    out01 = b._ex.run({b._input: x / 255.0})
    if np.abs(out01[b._pooled] - pooled).max() < 1e-6:
        raise BackboneLoadError("probe: graph ignores input scale; expected 0-255 inputs")
