"""Builder for stand-in extractor graphs.

Produces a small seeded random-weight convolutional graph with exactly the
structure the backbone loader demands: 0-255 input [N,3,224,224] normalized
in-graph, post-activation maps [N,1280,7,7] and their global average pool
[N,1280]. Used by the test suite and the bundled demo; a converted
pretrained checkpoint drops into the same loader unchanged.
"""

import numpy as np

from . import onnxlite as ox

_WIDTHS = (16, 32, 64, 128, 256)


def build_model(seed: int = 0) -> ox.Model:
    rng = np.random.default_rng(seed)
    nodes = []
    init = {}

    init["c_offset"] = np.array(127.5, dtype=np.float32)
    init["c_scale"] = np.array(127.5, dtype=np.float32)
    nodes.append(ox.make_node("Sub", ["images", "c_offset"], ["centered"]))
    nodes.append(ox.make_node("Div", ["centered", "c_scale"], ["normed"]))

    prev = "normed"
    c_in = 3
    for li, c_out in enumerate(_WIDTHS):
        wname = "conv%d_w" % li
        fan_in = c_in * 9
        init[wname] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                 size=(c_out, c_in, 3, 3)).astype(np.float32)
        nodes.append(ox.make_node("Conv", [prev, wname], ["conv%d" % li],
                                  strides=[2, 2], pads=[1, 1, 1, 1],
                                  kernel_shape=[3, 3]))
        nodes.append(ox.make_node("Relu", ["conv%d" % li], ["act%d" % li]))
        prev = "act%d" % li
        c_in = c_out

    init["proj_w"] = rng.normal(0.0, np.sqrt(2.0 / c_in),
                                size=(1280, c_in, 1, 1)).astype(np.float32)
    nodes.append(ox.make_node("Conv", [prev, "proj_w"], ["proj"],
                              strides=[1, 1], pads=[0, 0, 0, 0],
                              kernel_shape=[1, 1]))
    nodes.append(ox.make_node("Relu", ["proj"], ["maps"]))
    nodes.append(ox.make_node("GlobalAveragePool", ["maps"], ["gap"]))
    nodes.append(ox.make_node("Flatten", ["gap"], ["pooled"], axis=1))

    graph = ox.Graph(
        "standin_extractor",
        nodes,
        init,
        inputs=[ox.ValueInfo("images", ox.DT_FLOAT, ["N", 3, 224, 224])],
        outputs=[
            ox.ValueInfo("maps", ox.DT_FLOAT, ["N", 1280, 7, 7]),
            ox.ValueInfo("pooled", ox.DT_FLOAT, ["N", 1280]),
        ],
    )
    return ox.Model(graph)


def build_standin(path, seed: int = 0):
    ox.save_model(build_model(seed), path)
    return path
