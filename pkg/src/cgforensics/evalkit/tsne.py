"""Exact t-SNE for feature visualization.

The O(N^2) reference algorithm: per-point precision found by binary search
to the target entropy log(perplexity), symmetrized affinities, gradient
descent with early exaggeration, momentum switch and per-parameter gains.
Capped at 5000 points by precondition; the experiments here embed a few
hundred features.
"""

import numpy as np

_EXAGGERATION = 12.0
_EXAG_ITERS = 250
_MOMENTUM_SWITCH = 250
_TINY = 1e-12


def _squared_distances(X):
    s = (X * X).sum(axis=1)
    d2 = s[:, None] + s[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _affinities(D, perplexity):
    n = D.shape[0]
    target = np.log(perplexity)
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    mask = ~np.eye(n, dtype=bool)
    P = np.zeros((n, n))
    for _ in range(50):
        W = np.exp(-D * beta[:, None])
        W[~mask] = 0.0
        sumW = np.maximum(W.sum(axis=1), _TINY)
        H = np.log(sumW) + beta * (D * W).sum(axis=1) / sumW
        diff = H - target
        too_high = diff > 0
        lo = np.where(too_high, beta, lo)
        hi = np.where(too_high, hi, beta)
        beta = np.where(too_high,
                        np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0),
                        np.where(np.isinf(lo), beta / 2.0, (beta + lo) / 2.0))
        P = W / sumW[:, None]
    return P


def tsne(features, perplexity=30.0, iterations=1000, seed=0, learning_rate=200.0):
    """2-D embedding of the feature rows; deterministic under seed."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array")
    n = X.shape[0]
    if not 5 <= n <= 5000:
        raise ValueError("point count %d outside [5, 5000]" % n)
    if perplexity >= n / 3.0:
        raise ValueError("perplexity must be below count/3")
    if perplexity <= 0:
        raise ValueError("perplexity must be positive")

    D = _squared_distances(X)
    P = _affinities(D, perplexity)
    P = (P + P.T) / (2.0 * n)
    P = np.maximum(P, _TINY)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)

    for it in range(iterations):
        Pit = P * _EXAGGERATION if it < _EXAG_ITERS else P
        d2 = _squared_distances(Y)
        qnum = 1.0 / (1.0 + d2)
        np.fill_diagonal(qnum, 0.0)
        Q = np.maximum(qnum / qnum.sum(), _TINY)
        PQq = (Pit - Q) * qnum
        grad = 4.0 * ((np.diag(PQq.sum(axis=1)) - PQq) @ Y)
        momentum = 0.5 if it < _MOMENTUM_SWITCH else 0.8
        flip = np.sign(grad) != np.sign(update)
        gains = np.where(flip, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    return Y


def write_embedding_csv(path, Y, labels, header_lines=()):
    with open(path, "w") as f:
        for line in header_lines:
            f.write("# %s\n" % line)
        f.write("x,y,label\n")
        for (x, y), lab in zip(Y, labels):
            f.write("%.8g,%.8g,%d\n" % (x, y, lab))


_MARKERS = {
    0: ("circle", "#2ca02c"),    # GAN: green circles
    1: ("square", "#1f77b4"),    # Graphics: blue squares
    2: ("diamond", "#e377c2"),   # Real: pink diamonds
}


def write_embedding_svg(path, Y, labels, size=480, margin=30):
    """Scatter plot with one marker style per class."""
    Y = np.asarray(Y, dtype=np.float64)
    labels = np.asarray(labels)
    lo = Y.min(axis=0)
    hi = Y.max(axis=0)
    span = np.where(hi - lo == 0, 1.0, hi - lo)

    def to_px(p):
        q = (p - lo) / span
        return (margin + q[0] * (size - 2 * margin),
                size - margin - q[1] * (size - 2 * margin))

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (size, size),
             '<rect width="100%" height="100%" fill="white"/>']
    r = 4
    for p, lab in zip(Y, labels):
        x, y = to_px(p)
        shape, color = _MARKERS[int(lab)]
        if shape == "circle":
            parts.append('<circle cx="%.1f" cy="%.1f" r="%d" fill="%s"/>' % (x, y, r, color))
        elif shape == "square":
            parts.append('<rect x="%.1f" y="%.1f" width="%d" height="%d" fill="%s"/>'
                         % (x - r, y - r, 2 * r, 2 * r, color))
        else:
            pts = "%.1f,%.1f %.1f,%.1f %.1f,%.1f %.1f,%.1f" % (
                x, y - r - 1, x + r + 1, y, x, y + r + 1, x - r - 1, y)
            parts.append('<polygon points="%s" fill="%s"/>' % (pts, color))
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))
