"""Minimal self-contained ONNX support: protobuf wire-format reader and
writer for the model schema subset this package needs, plus a numpy
executor for a pinned operator set.

Supported operators: Conv, Relu, Sigmoid, Add, Sub, Mul, Div, Clip,
GlobalAveragePool, Flatten, Reshape, Transpose, Gemm, MatMul, Concat
(default domain, opset 13 declared). Anything else fails loudly at load.

The executor computes in float64 regardless of the stored float32 weights,
which keeps results batch-invariant to well below 1e-5.
"""

import struct

import numpy as np

OPSET_VERSION = 13

# TensorProto.DataType values used here
DT_FLOAT = 1
DT_INT64 = 7

# AttributeProto.AttributeType
AT_FLOAT, AT_INT, AT_STRING, AT_TENSOR = 1, 2, 3, 4
AT_FLOATS, AT_INTS, AT_STRINGS = 6, 7, 8

SUPPORTED_OPS = frozenset([
    "Conv", "Relu", "Sigmoid", "Add", "Sub", "Mul", "Div", "Clip",
    "GlobalAveragePool", "Flatten", "Reshape", "Transpose", "Gemm",
    "MatMul", "Concat",
])


class OnnxFormatError(Exception):
    pass


class UnsupportedOpError(Exception):
    pass


# ---------------------------------------------------------------- wire level

def _enc_varint(v: int) -> bytes:
    if v < 0:
        v += 1 << 64
    out = bytearray()
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _dec_varint(buf, pos):
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise OnnxFormatError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            break
        shift += 7
        if shift > 70:
            raise OnnxFormatError("varint too long")
    return result, pos


def _signed64(v: int) -> int:
    return v - (1 << 64) if v >= 1 << 63 else v


def _tag(field: int, wire: int) -> bytes:
    return _enc_varint(field << 3 | wire)


def _field_varint(field: int, v: int) -> bytes:
    return _tag(field, 0) + _enc_varint(v)


def _field_bytes(field: int, payload: bytes) -> bytes:
    return _tag(field, 2) + _enc_varint(len(payload)) + payload


def _field_str(field: int, s: str) -> bytes:
    return _field_bytes(field, s.encode("utf-8"))


def _field_float(field: int, f: float) -> bytes:
    return _tag(field, 5) + struct.pack("<f", f)


def _iter_fields(buf):
    """Yield (field_number, wire_type, value) triples of one message."""
    pos = 0
    n = len(buf)
    while pos < n:
        key, pos = _dec_varint(buf, pos)
        field, wire = key >> 3, key & 7
        if wire == 0:
            val, pos = _dec_varint(buf, pos)
        elif wire == 1:
            val = buf[pos:pos + 8]
            pos += 8
        elif wire == 2:
            ln, pos = _dec_varint(buf, pos)
            val = buf[pos:pos + ln]
            if len(val) != ln:
                raise OnnxFormatError("truncated length-delimited field")
            pos += ln
        elif wire == 5:
            val = buf[pos:pos + 4]
            pos += 4
        else:
            raise OnnxFormatError("unsupported wire type %d" % wire)
        yield field, wire, val


def _packed_varints(val, wire):
    # repeated scalar: packed (wire 2) or single unpacked entry (wire 0)
    if wire == 0:
        return [val]
    out = []
    pos = 0
    while pos < len(val):
        v, pos = _dec_varint(val, pos)
        out.append(v)
    return out


# ---------------------------------------------------------------- model ir

class ValueInfo:
    def __init__(self, name, elem_type=DT_FLOAT, shape=None):
        self.name = name
        self.elem_type = elem_type
        self.shape = list(shape) if shape is not None else None

    def __repr__(self):
        return "ValueInfo(%r, shape=%r)" % (self.name, self.shape)


class Node:
    def __init__(self, op_type, inputs, outputs, name="", attrs=None):
        self.op_type = op_type
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.name = name
        self.attrs = dict(attrs or {})


class Graph:
    def __init__(self, name, nodes, initializers, inputs, outputs):
        self.name = name
        self.nodes = list(nodes)
        self.initializers = dict(initializers)
        self.inputs = list(inputs)
        self.outputs = list(outputs)


class Model:
    def __init__(self, graph, opset=OPSET_VERSION, ir_version=8, producer="cgforensics"):
        self.graph = graph
        self.opset = opset
        self.ir_version = ir_version
        self.producer = producer


def make_node(op_type, inputs, outputs, name="", **attrs):
    return Node(op_type, inputs, outputs, name, attrs)


# ---------------------------------------------------------------- encoding

def _enc_tensor(name, arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == np.int64:
        dt = DT_INT64
        raw = arr.astype("<i8").tobytes()
    else:
        dt = DT_FLOAT
        raw = arr.astype("<f4").tobytes()
    out = b""
    for d in arr.shape:
        out += _field_varint(1, d)
    out += _field_varint(2, dt)
    out += _field_str(8, name)
    out += _field_bytes(9, raw)
    return out


def _enc_attr(name, value) -> bytes:
    out = _field_str(1, name)
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        out += _field_varint(3, value) + _field_varint(20, AT_INT)
    elif isinstance(value, float):
        out += _field_float(2, value) + _field_varint(20, AT_FLOAT)
    elif isinstance(value, str):
        out += _field_str(4, value) + _field_varint(20, AT_STRING)
    elif isinstance(value, np.ndarray):
        out += _field_bytes(5, _enc_tensor("", value)) + _field_varint(20, AT_TENSOR)
    elif isinstance(value, (list, tuple)):
        if value and isinstance(value[0], float):
            payload = b"".join(struct.pack("<f", v) for v in value)
            out += _field_bytes(7, payload) + _field_varint(20, AT_FLOATS)
        else:
            payload = b"".join(_enc_varint(int(v)) for v in value)
            out += _field_bytes(8, payload) + _field_varint(20, AT_INTS)
    else:
        raise TypeError("cannot encode attribute %r=%r" % (name, value))
    return out


def _enc_node(node: Node) -> bytes:
    out = b""
    for i in node.inputs:
        out += _field_str(1, i)
    for o in node.outputs:
        out += _field_str(2, o)
    if node.name:
        out += _field_str(3, node.name)
    out += _field_str(4, node.op_type)
    for k in sorted(node.attrs):
        out += _field_bytes(5, _enc_attr(k, node.attrs[k]))
    return out


def _enc_value_info(vi: ValueInfo) -> bytes:
    shape_payload = b""
    for d in (vi.shape or []):
        if isinstance(d, str):
            dim = _field_str(2, d)
        else:
            dim = _field_varint(1, int(d))
        shape_payload += _field_bytes(1, dim)
    tensor_type = _field_varint(1, vi.elem_type) + _field_bytes(2, shape_payload)
    type_proto = _field_bytes(1, tensor_type)
    return _field_str(1, vi.name) + _field_bytes(2, type_proto)


def _enc_graph(g: Graph) -> bytes:
    out = b""
    for n in g.nodes:
        out += _field_bytes(1, _enc_node(n))
    out += _field_str(2, g.name)
    for name, arr in g.initializers.items():
        out += _field_bytes(5, _enc_tensor(name, arr))
    for vi in g.inputs:
        out += _field_bytes(11, _enc_value_info(vi))
    for vi in g.outputs:
        out += _field_bytes(12, _enc_value_info(vi))
    return out


def model_bytes(model: Model) -> bytes:
    opset = _field_bytes(8, _field_str(1, "") + _field_varint(2, model.opset))
    return (_field_varint(1, model.ir_version)
            + _field_str(2, model.producer)
            + _field_bytes(7, _enc_graph(model.graph))
            + opset)


def save_model(model: Model, path):
    with open(path, "wb") as f:
        f.write(model_bytes(model))


# ---------------------------------------------------------------- decoding

def _dec_tensor(buf):
    dims = []
    dt = DT_FLOAT
    name = ""
    raw = None
    float_data = []
    int64_data = []
    for field, wire, val in _iter_fields(buf):
        if field == 1:
            dims.extend(_signed64(v) for v in _packed_varints(val, wire))
        elif field == 2:
            dt = val
        elif field == 4:
            if wire == 5:
                float_data.append(struct.unpack("<f", val)[0])
            else:
                float_data.extend(np.frombuffer(val, dtype="<f4").tolist())
        elif field == 7:
            int64_data.extend(_signed64(v) for v in _packed_varints(val, wire))
        elif field == 8:
            name = val.decode("utf-8")
        elif field == 9:
            raw = bytes(val)
    if dt == DT_FLOAT:
        if raw is not None:
            arr = np.frombuffer(raw, dtype="<f4")
        else:
            arr = np.array(float_data, dtype=np.float32)
    elif dt == DT_INT64:
        if raw is not None:
            arr = np.frombuffer(raw, dtype="<i8")
        else:
            arr = np.array(int64_data, dtype=np.int64)
    else:
        raise OnnxFormatError("unsupported tensor data type %d" % dt)
    return name, arr.reshape(dims) if dims else arr.reshape(())


def _dec_attr(buf):
    name = ""
    kind = None
    values = {}
    for field, wire, val in _iter_fields(buf):
        if field == 1:
            name = val.decode("utf-8")
        elif field == 2:
            values["f"] = struct.unpack("<f", val)[0]
        elif field == 3:
            values["i"] = _signed64(val)
        elif field == 4:
            values["s"] = val.decode("utf-8")
        elif field == 5:
            values["t"] = _dec_tensor(val)[1]
        elif field == 7:
            if wire == 5:
                values.setdefault("floats", []).append(struct.unpack("<f", val)[0])
            else:
                values.setdefault("floats", []).extend(np.frombuffer(val, dtype="<f4").tolist())
        elif field == 8:
            values.setdefault("ints", []).extend(
                _signed64(v) for v in _packed_varints(val, wire))
        elif field == 20:
            kind = val
    if kind == AT_FLOAT:
        return name, values.get("f", 0.0)
    if kind == AT_INT:
        return name, values.get("i", 0)
    if kind == AT_STRING:
        return name, values.get("s", "")
    if kind == AT_TENSOR:
        return name, values["t"]
    if kind == AT_FLOATS:
        return name, [float(v) for v in values.get("floats", [])]
    if kind == AT_INTS:
        return name, [int(v) for v in values.get("ints", [])]
    # writers may omit the type field; fall back on whichever value is present
    for key in ("i", "f", "s", "t", "ints", "floats"):
        if key in values:
            return name, values[key]
    raise OnnxFormatError("attribute %r carries no value" % name)


def _dec_node(buf) -> Node:
    node = Node("", [], [])
    for field, wire, val in _iter_fields(buf):
        if field == 1:
            node.inputs.append(val.decode("utf-8"))
        elif field == 2:
            node.outputs.append(val.decode("utf-8"))
        elif field == 3:
            node.name = val.decode("utf-8")
        elif field == 4:
            node.op_type = val.decode("utf-8")
        elif field == 5:
            k, v = _dec_attr(val)
            node.attrs[k] = v
        elif field == 7:
            domain = val.decode("utf-8")
            if domain not in ("", "ai.onnx"):
                raise UnsupportedOpError("unsupported op domain %r" % domain)
    return node


def _dec_value_info(buf) -> ValueInfo:
    vi = ValueInfo("")
    for field, wire, val in _iter_fields(buf):
        if field == 1:
            vi.name = val.decode("utf-8")
        elif field == 2:
            for f2, w2, v2 in _iter_fields(val):
                if f2 != 1:
                    continue
                for f3, w3, v3 in _iter_fields(v2):
                    if f3 == 1:
                        vi.elem_type = v3
                    elif f3 == 2:
                        dims = []
                        for f4, w4, v4 in _iter_fields(v3):
                            if f4 != 1:
                                continue
                            dim = None
                            for f5, w5, v5 in _iter_fields(v4):
                                if f5 == 1:
                                    dim = _signed64(v5)
                                elif f5 == 2:
                                    dim = v5.decode("utf-8")
                            dims.append(dim)
                        vi.shape = dims
    return vi


def _dec_graph(buf) -> Graph:
    g = Graph("", [], {}, [], [])
    for field, wire, val in _iter_fields(buf):
        if field == 1:
            g.nodes.append(_dec_node(val))
        elif field == 2:
            g.name = val.decode("utf-8")
        elif field == 5:
            name, arr = _dec_tensor(val)
            g.initializers[name] = arr
        elif field == 11:
            g.inputs.append(_dec_value_info(val))
        elif field == 12:
            g.outputs.append(_dec_value_info(val))
    return g


def load_model(path) -> Model:
    with open(path, "rb") as f:
        buf = f.read()
    graph = None
    opset = OPSET_VERSION
    ir_version = 8
    producer = ""
    try:
        for field, wire, val in _iter_fields(buf):
            if field == 1 and wire == 0:
                ir_version = val
            elif field == 2 and wire == 2:
                producer = val.decode("utf-8", "replace")
            elif field == 7 and wire == 2:
                graph = _dec_graph(val)
            elif field == 8 and wire == 2:
                for f2, w2, v2 in _iter_fields(val):
                    if f2 == 2:
                        opset = v2
    except OnnxFormatError:
        raise
    except Exception as e:
        raise OnnxFormatError("cannot parse model file: %s" % e)
    if graph is None:
        raise OnnxFormatError("model file has no graph")
    return Model(graph, opset=opset, ir_version=ir_version, producer=producer)


# ---------------------------------------------------------------- executor

def _conv2d(x, w, b, strides, pads, group):
    n, c, h, wd = x.shape
    m, cg, kh, kw = w.shape
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    ho = (h + pt + pb - kh) // sh + 1
    wo = (wd + pl + pr - kw) // sw + 1
    st = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, xp.shape[1], ho, wo, kh, kw),
        (st[0], st[1], st[2] * sh, st[3] * sw, st[2], st[3]), writeable=False)
    if group == 1:
        col = win.reshape(n, c, ho * wo, kh * kw)
        col = col.transpose(0, 2, 1, 3).reshape(n * ho * wo, c * kh * kw)
        out = col @ w.reshape(m, cg * kh * kw).T
        out = out.reshape(n, ho, wo, m).transpose(0, 3, 1, 2)
    else:
        cpg, mpg = c // group, m // group
        out = np.empty((n, m, ho, wo), dtype=x.dtype)
        for gi in range(group):
            wg = w[gi * mpg:(gi + 1) * mpg]
            wing = win[:, gi * cpg:(gi + 1) * cpg]
            col = wing.reshape(n, cpg, ho * wo, kh * kw)
            col = col.transpose(0, 2, 1, 3).reshape(n * ho * wo, cpg * kh * kw)
            og = col @ wg.reshape(mpg, cpg * kh * kw).T
            out[:, gi * mpg:(gi + 1) * mpg] = og.reshape(n, ho, wo, mpg).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b[None, :, None, None]
    return out


class Executor:
    """Runs a loaded graph on numpy inputs. Weights are upcast to float64."""

    def __init__(self, model: Model):
        self.graph = model.graph
        for node in self.graph.nodes:
            if node.op_type not in SUPPORTED_OPS:
                raise UnsupportedOpError("operator %r is outside the pinned set" % node.op_type)
        self.weights = {}
        for name, arr in self.graph.initializers.items():
            w = arr.astype(np.float64) if arr.dtype != np.int64 else arr.copy()
            w.setflags(write=False)
            self.weights[name] = w
        self.input_names = [vi.name for vi in self.graph.inputs
                            if vi.name not in self.weights]
        self.output_names = [vi.name for vi in self.graph.outputs]

    def run(self, feeds: dict) -> dict:
        vals = dict(self.weights)
        for name in self.input_names:
            if name not in feeds:
                raise ValueError("missing graph input %r" % name)
            vals[name] = np.asarray(feeds[name], dtype=np.float64)
        for node in self.graph.nodes:
            args = [vals[i] if i else None for i in node.inputs]
            out = self._apply(node, args)
            vals[node.outputs[0]] = out
        missing = [n for n in self.output_names if n not in vals]
        if missing:
            raise OnnxFormatError("graph never produced outputs %r" % missing)
        return {n: vals[n] for n in self.output_names}

    def _apply(self, node: Node, args):
        op = node.op_type
        a = node.attrs
        if op == "Conv":
            x, w = args[0], args[1]
            b = args[2] if len(args) > 2 else None
            strides = a.get("strides", [1, 1])
            pads = a.get("pads", [0, 0, 0, 0])
            group = a.get("group", 1)
            dil = a.get("dilations", [1, 1])
            if list(dil) != [1, 1]:
                raise UnsupportedOpError("dilated Conv not supported")
            if a.get("auto_pad", "NOTSET") not in ("", "NOTSET"):
                raise UnsupportedOpError("auto_pad not supported; use explicit pads")
            return _conv2d(x, w, b, list(strides), list(pads), group)
        if op == "Relu":
            return np.maximum(args[0], 0.0)
        if op == "Sigmoid":
            return 1.0 / (1.0 + np.exp(-args[0]))
        if op == "Add":
            return args[0] + args[1]
        if op == "Sub":
            return args[0] - args[1]
        if op == "Mul":
            return args[0] * args[1]
        if op == "Div":
            return args[0] / args[1]
        if op == "Clip":
            lo = args[1] if len(args) > 1 and args[1] is not None else a.get("min", -np.inf)
            hi = args[2] if len(args) > 2 and args[2] is not None else a.get("max", np.inf)
            return np.clip(args[0], lo, hi)
        if op == "GlobalAveragePool":
            return args[0].mean(axis=(2, 3), keepdims=True)
        if op == "Flatten":
            axis = a.get("axis", 1)
            x = args[0]
            lead = int(np.prod(x.shape[:axis])) if axis else 1
            return x.reshape(lead, -1)
        if op == "Reshape":
            shape = [int(v) for v in np.asarray(args[1]).ravel()]
            x = args[0]
            shape = [x.shape[i] if s == 0 else s for i, s in enumerate(shape)]
            return x.reshape(shape)
        if op == "Transpose":
            perm = a.get("perm")
            return np.transpose(args[0], perm)
        if op == "Gemm":
            x, w = args[0], args[1]
            if a.get("transA", 0):
                x = x.T
            if a.get("transB", 0):
                w = w.T
            y = a.get("alpha", 1.0) * (x @ w)
            if len(args) > 2 and args[2] is not None:
                y = y + a.get("beta", 1.0) * args[2]
            return y
        if op == "MatMul":
            return args[0] @ args[1]
        if op == "Concat":
            return np.concatenate(args, axis=a["axis"])
        raise UnsupportedOpError(op)
