"""Differentiable primitives (forward + hand-derived backward).

Convolutions use im2col so the heavy lifting lands in BLAS matmuls; col2im
scatters gradients back with one vectorized add per kernel offset.  Arrays
are NCHW throughout.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (N, L, C*kh*kw) patch matrix; xp is already padded."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    # (N, ho, wo, C, kh, kw) -> (N, L, C*kh*kw)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ho * wo, c * kh * kw)


def conv2d_forward(x, w, b, stride: int = 1, pad: int = 0):
    """x: (N,C,H,W), w: (F,C,kh,kw), b: (F,).  Returns ((N,F,Ho,Wo), cache)."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    ho = (xp.shape[2] - kh) // stride + 1
    wo = (xp.shape[3] - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride)
    wm = w.reshape(f, -1)
    out = cols.reshape(n * ho * wo, -1) @ wm.T + b
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    cache = (cols, w, x.shape, stride, pad, (ho, wo))
    return out, cache


def conv2d_backward(cache, dout):
    """Returns (dx, dw, db)."""
    cols, w, x_shape, stride, pad, (ho, wo) = cache
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
    dw = (dout_mat.T @ cols.reshape(n * ho * wo, -1)).reshape(w.shape)
    db = dout_mat.sum(axis=0)
    dcols = (dout_mat @ w.reshape(f, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += dcols[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return dx, dw, db


def conv2d_out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def dense_forward(x, w, b):
    """x: (N, In), w: (In, Out), b: (Out,)."""
    out = x @ w + b
    return out, (x, w)


def dense_backward(cache, dout):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def leaky_relu_forward(x, slope: float = 0.2):
    out = np.where(x >= 0, x, slope * x)
    return out, (x >= 0, slope)


def leaky_relu_backward(cache, dout):
    pos, slope = cache
    return np.where(pos, dout, slope * dout)


def tanh_forward(x):
    out = np.tanh(x)
    return out, out


def tanh_backward(cache, dout):
    return dout * (1.0 - cache * cache)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def batchnorm2d_forward(x, gamma, beta, running_mean, running_var, mode: str, momentum: float = 0.1):
    """Per-channel batch norm over (N, H, W).

    Train mode normalizes with batch statistics and returns updated running
    stats (biased variance); eval mode uses the running stats unchanged.
    """
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_mean = (1.0 - momentum) * running_mean + momentum * mean
        new_var = (1.0 - momentum) * running_var + momentum * var
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, gamma, inv_std, mode)
    return out, cache, new_mean, new_var


def batchnorm2d_backward(cache, dout):
    """Returns (dx, dgamma, dbeta)."""
    xhat, gamma, inv_std, mode = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if mode == "train":
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        dx = (
            inv_std[None, :, None, None]
            / m
            * (m * dxhat - dxhat.sum(axis=(0, 2, 3))[None, :, None, None] - xhat * (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None])
        )
    else:
        dx = dxhat * inv_std[None, :, None, None]
    return dx, dgamma, dbeta


def upsample2x_forward(x):
    out = x.repeat(2, axis=2).repeat(2, axis=3)
    return out, x.shape


def upsample2x_backward(cache, dout):
    n, c, h, w = cache
    return dout.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))


def dropout_forward(x, rate: float, rng: np.random.Generator):
    """Inverted dropout; eval callers simply skip the op."""
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = x * keep * scale
    return out, (keep, scale)


def dropout_backward(cache, dout):
    keep, scale = cache
    return dout * keep * scale


def bce_logits(logits: np.ndarray, target_label: float) -> float:
    """Mean binary cross-entropy between sigmoid(logits) and a constant label.

    Uses the log-sum-exp form max(z,0) - z*y + log(1 + exp(-|z|)), which is
    exact and overflow-free for arbitrarily large logits.
    """
    z = np.asarray(logits, dtype=np.float64)
    loss = np.maximum(z, 0.0) - z * target_label + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean())


def bce_logits_grad(logits: np.ndarray, target_label: float) -> np.ndarray:
    """d(mean BCE)/d(logits) = (sigmoid(z) - y) / n."""
    z = np.asarray(logits)
    return (sigmoid(z) - target_label) / z.size


def l1_mean(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).mean())


def l1_mean_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d(mean |a-b|)/da, with subgradient 0 at exact ties."""
    diff = a - b
    return np.sign(diff) / diff.size
