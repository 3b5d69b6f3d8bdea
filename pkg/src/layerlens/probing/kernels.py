"""Two-layer ReLU perceptron: training and inference kernels.

Parameters are float32 arrays ``w1 (d, h)``, ``b1 (h,)``, ``w2 (c, h)``,
``b2 (c,)``. Training is plain mini-batch gradient descent on mean
cross-entropy; the visiting order of examples is precomputed as one row per
epoch so both backends take identical steps.
"""

from __future__ import annotations

import numpy as np

from layerlens import _jit


@_jit.njit(fastmath=True, error_model="numpy")
def _train_numba(x, y, w1, b1, w2, b2, lr, order, batch_size):
    n_epochs, n = order.shape
    d, h = w1.shape
    c = w2.shape[0]
    gw1 = np.zeros_like(w1)
    gb1 = np.zeros_like(b1)
    gw2 = np.zeros_like(w2)
    gb2 = np.zeros_like(b2)
    hid = np.empty(h, dtype=w1.dtype)
    dh = np.empty(h, dtype=w1.dtype)
    logits = np.empty(c, dtype=np.float64)
    dlog = np.empty(c, dtype=w1.dtype)
    losses = np.full(n_epochs, np.nan)
    for e in range(n_epochs):
        total = 0.0
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            scale = 1.0 / (stop - start)
            gw1[:] = 0.0
            gb1[:] = 0.0
            gw2[:] = 0.0
            gb2[:] = 0.0
            for t in range(start, stop):
                i = order[e, t]
                for k in range(h):
                    hid[k] = b1[k]
                for j in range(d):
                    xj = x[i, j]
                    if xj != 0.0:
                        for k in range(h):
                            hid[k] += xj * w1[j, k]
                for k in range(h):
                    if hid[k] < 0.0:
                        hid[k] = 0.0
                top = -np.inf
                for q in range(c):
                    s = b2[q]
                    for k in range(h):
                        s += w2[q, k] * hid[k]
                    logits[q] = s
                    if s > top:
                        top = s
                z = 0.0
                for q in range(c):
                    logits[q] = np.exp(logits[q] - top)
                    z += logits[q]
                total += -np.log(logits[y[i]] / z)
                for q in range(c):
                    g = logits[q] / z
                    if q == y[i]:
                        g -= 1.0
                    dlog[q] = g * scale
                for k in range(h):
                    dh[k] = 0.0
                for q in range(c):
                    g = dlog[q]
                    gb2[q] += g
                    for k in range(h):
                        gw2[q, k] += g * hid[k]
                        dh[k] += g * w2[q, k]
                for k in range(h):
                    if hid[k] <= 0.0:
                        dh[k] = 0.0
                    gb1[k] += dh[k]
                for j in range(d):
                    xj = x[i, j]
                    if xj != 0.0:
                        for k in range(h):
                            gw1[j, k] += xj * dh[k]
            for j in range(d):
                for k in range(h):
                    w1[j, k] -= lr * gw1[j, k]
            for k in range(h):
                b1[k] -= lr * gb1[k]
            for q in range(c):
                b2[q] -= lr * gb2[q]
                for k in range(h):
                    w2[q, k] -= lr * gw2[q, k]
        losses[e] = total / n
        if not np.isfinite(losses[e]):
            break
    return losses


def _train_numpy(x, y, w1, b1, w2, b2, lr, order, batch_size):
    n_epochs, n = order.shape
    c = w2.shape[0]
    lr = w1.dtype.type(lr)
    eye = np.eye(c, dtype=w1.dtype)
    losses = np.full(n_epochs, np.nan)
    for e in range(n_epochs):
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[e, start:start + batch_size]
            xb = x[idx]
            hid = xb @ w1
            hid += b1
            np.maximum(hid, 0.0, out=hid)
            logits = hid.astype(np.float64) @ w2.T.astype(np.float64) + b2
            logits -= logits.max(axis=1, keepdims=True)
            np.exp(logits, out=logits)
            z = logits.sum(axis=1, keepdims=True)
            probs = logits / z
            total += float(-np.log(probs[np.arange(len(idx)), y[idx]]).sum())
            dlog = ((probs - eye[y[idx]]) / len(idx)).astype(w1.dtype)
            dh = dlog @ w2
            dh[hid <= 0.0] = 0.0
            w2 -= lr * (dlog.T @ hid)
            b2 -= lr * dlog.sum(axis=0)
            w1 -= lr * (xb.T @ dh)
            b1 -= lr * dh.sum(axis=0)
        losses[e] = total / n
        if not np.isfinite(losses[e]):
            break
    return losses


def train_mlp(x, y, params, lr, order, batch_size, backend: str | None = None) -> np.ndarray:
    """Train ``params`` (w1, b1, w2, b2) in place; returns per-epoch mean loss.

    A NaN entry means training stopped early after a non-finite epoch loss.
    """
    w1, b1, w2, b2 = params
    backend = backend or _jit.backend()
    fn = _train_numba if backend == "numba" else _train_numpy
    return fn(
        np.ascontiguousarray(x, dtype=np.float32),
        np.ascontiguousarray(y, dtype=np.int64),
        w1, b1, w2, b2,
        float(lr),
        np.ascontiguousarray(order, dtype=np.int64),
        int(batch_size),
    )


def forward_logits(x, params) -> np.ndarray:
    w1, b1, w2, b2 = params
    hid = np.asarray(x, dtype=np.float32) @ w1 + b1
    np.maximum(hid, 0.0, out=hid)
    return hid.astype(np.float64) @ w2.T.astype(np.float64) + b2


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(y)), y]))


@_jit.njit(error_model="numpy")
def _mean_cosine_numba(x, protos):
    n, d = x.shape
    m = protos.shape[0]
    out = np.empty(n)
    pnorm = np.empty(m)
    for p in range(m):
        s = 0.0
        for j in range(d):
            s += protos[p, j] * protos[p, j]
        pnorm[p] = np.sqrt(s)
    for i in range(n):
        xn = 0.0
        for j in range(d):
            xn += x[i, j] * x[i, j]
        xn = np.sqrt(xn)
        acc = 0.0
        for p in range(m):
            dot = 0.0
            for j in range(d):
                dot += x[i, j] * protos[p, j]
            acc += dot / (xn * pnorm[p])
        out[i] = acc / m
    return out


def _mean_cosine_numpy(x, protos):
    xn = np.sqrt(np.einsum("ij,ij->i", x, x))
    pn = np.sqrt(np.einsum("ij,ij->i", protos, protos))
    cos = (x @ protos.T) / np.outer(xn, pn)
    return cos.mean(axis=1)


def mean_cosine(x, protos, backend: str | None = None) -> np.ndarray:
    """For every row of ``x``, the mean cosine similarity with the rows of ``protos``."""
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    protos = np.ascontiguousarray(np.atleast_2d(protos), dtype=np.float64)
    backend = backend or _jit.backend()
    if backend == "numba":
        return _mean_cosine_numba(x, protos)
    return _mean_cosine_numpy(x, protos)
