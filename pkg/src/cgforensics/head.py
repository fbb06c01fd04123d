"""The trainable part of the classifier: feature fusion and a 3-class
affine+softmax head, trained from scratch with mini-batch Adam on
categorical cross-entropy.

Everything here is float64 and seeded, so a training run is bitwise
reproducible. The head is the only trainable object in the whole package:
3*D+3 parameters (11523 fused, 3843 single-branch).
"""

import struct
from dataclasses import dataclass, field

import numpy as np

N_CLASSES = 3
FUSION_ORDER = ("RGB", "LCH", "HSV")

MAGIC = b"MCHD"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class TrainingError(Exception):
    pass


@dataclass
class BranchFeature:
    image_id: int
    branch: str
    vec: np.ndarray


@dataclass
class HeadModel:
    weights: np.ndarray  # (3, D)
    bias: np.ndarray     # (3,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != N_CLASSES:
            raise ValueError("weights must be 3 x D")
        if self.bias.shape != (N_CLASSES,):
            raise ValueError("bias must have 3 entries")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("non-finite parameters")

    @property
    def dim(self):
        return self.weights.shape[1]


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 256
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    seed: int = 0
    checkpoint: str = "best_val"  # or "final"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("hyperparameters must be positive")
        if self.checkpoint not in ("best_val", "final"):
            raise ValueError("checkpoint must be best_val or final")


def param_count(m: HeadModel) -> int:
    return m.weights.size + m.bias.size


def concat_features(rgb: BranchFeature, lch: BranchFeature, hsv: BranchFeature) -> np.ndarray:
    got = (rgb.branch, lch.branch, hsv.branch)
    if got != FUSION_ORDER:
        raise ValueError("branch order must be %s, got %s" % (FUSION_ORDER, got))
    if not (rgb.image_id == lch.image_id == hsv.image_id):
        raise ValueError("branch features come from different images")
    parts = []
    for bf in (rgb, lch, hsv):
        v = np.asarray(bf.vec)
        if v.shape != (1280,):
            raise ValueError("branch vector must have 1280 entries, got %r" % (v.shape,))
        parts.append(v)
    return np.concatenate(parts)


def fuse_records(per_branch: dict) -> tuple:
    """Join per-branch cache records on image id.

    per_branch maps branch name to (image_id, label, branch_idx, vec)
    records. Returns (ids, labels, fused feature matrix) with columns in
    fusion order. Missing or label-inconsistent images raise TrainingError.
    """
    tables = {}
    labels = {}
    for name in FUSION_ORDER:
        if name not in per_branch:
            raise TrainingError("missing branch %r" % name)
        tab = {}
        for image_id, label, _, vec in per_branch[name]:
            tab[image_id] = vec
            prev = labels.setdefault(image_id, label)
            if prev != label:
                raise TrainingError("image %d has conflicting labels across caches" % image_id)
        tables[name] = tab
    common = set.intersection(*(set(t) for t in tables.values()))
    missing = set(labels) - common
    if missing:
        raise TrainingError("images missing from some branch cache: %s"
                            % sorted(missing)[:10])
    ids = np.array(sorted(common), dtype=np.uint64)
    y = np.array([labels[i] for i in ids], dtype=np.int64)
    X = np.concatenate([np.stack([tables[n][i] for i in ids]) for n in FUSION_ORDER], axis=1)
    return ids, y, X.astype(np.float32)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(W, b, X, y):
    """Mean cross-entropy over the batch and its analytic gradient."""
    z = X @ W.T + b
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    n = X.shape[0]
    loss = -logp[np.arange(n), y].mean()
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    g /= n
    return loss, g.T @ X, g.sum(axis=0)


def _check_inputs(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("feature matrix must be nonempty and 2-d")
    if y.shape != (X.shape[0],):
        raise TrainingError("labels do not match features")
    if not np.isfinite(X).all():
        raise TrainingError("non-finite feature values")
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise TrainingError("labels must lie in {0,1,2}")
    return X, y


def train_head(X, y, cfg: TrainConfig = TrainConfig(), val=None):
    """Train the softmax head; returns (HeadModel, per-epoch log).

    val, when given, is (X_val, y_val); with checkpoint="best_val" the
    returned model is the epoch with the highest validation accuracy.
    """
    X, y = _check_inputs(X, y)
    if val is not None:
        Xv, yv = _check_inputs(*val)
        if Xv.shape[1] != X.shape[1]:
            raise TrainingError("validation dimension differs from train")
    D = X.shape[1]
    W = np.zeros((N_CLASSES, D))
    b = np.zeros(N_CLASSES)
    mW = np.zeros_like(W); vW = np.zeros_like(W)
    mb = np.zeros_like(b); vb = np.zeros_like(b)
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon
    n = X.shape[0]
    t = 0
    log = []
    best = None
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            _, gW, gb = loss_and_grad(W, b, X[idx], y[idx])
            t += 1
            lr_t = lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
            mW = b1 * mW + (1 - b1) * gW
            vW = b2 * vW + (1 - b2) * gW * gW
            W = W - lr_t * mW / (np.sqrt(vW) + eps)
            mb = b1 * mb + (1 - b1) * gb
            vb = b2 * vb + (1 - b2) * gb * gb
            b = b - lr_t * mb / (np.sqrt(vb) + eps)
        row = {"epoch": epoch + 1}
        row["train_loss"], row["train_acc"] = _loss_acc(W, b, X, y)
        if val is not None:
            row["val_loss"], row["val_acc"] = _loss_acc(W, b, Xv, yv)
            if best is None or row["val_acc"] > best[0]:
                best = (row["val_acc"], W.copy(), b.copy())
        log.append(row)
    if val is not None and cfg.checkpoint == "best_val":
        W, b = best[1], best[2]
    return HeadModel(W, b), log


def _loss_acc(W, b, X, y):
    z = X @ W.T + b
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(len(y)), y].mean())
    acc = float((z.argmax(axis=1) == y).mean())
    return loss, acc


def predict(m: HeadModel, x):
    """Probabilities and argmax class for one vector or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != m.dim:
        raise ValueError("feature dimension %d, model dimension %d" % (x.shape[1], m.dim))
    p = _softmax(x @ m.weights.T + m.bias)
    cls = p.argmax(axis=1)
    if single:
        return p[0], int(cls[0])
    return p, cls


def save_head(m: HeadModel, path):
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, m.dim, N_CLASSES))
        f.write(m.weights.astype("<f4").tobytes())
        f.write(m.bias.astype("<f4").tobytes())


def load_head(path) -> HeadModel:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError("file too short for a head model")
        magic, version, dim, classes = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError("bad magic %r" % magic)
        if version != VERSION or classes != N_CLASSES:
            raise ValueError("unsupported head file (version %d, classes %d)" % (version, classes))
        W = np.frombuffer(f.read(4 * classes * dim), dtype="<f4").reshape(classes, dim)
        b = np.frombuffer(f.read(4 * classes), dtype="<f4")
    return HeadModel(W, b)


def write_log_csv(path, log, header_lines=()):
    cols = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
    with open(path, "w") as f:
        for line in header_lines:
            f.write("# %s\n" % line)
        f.write(",".join(cols) + "\n")
        for row in log:
            f.write(",".join(_fmt(row.get(c)) for c in cols) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.10g" % v
    return str(v)
