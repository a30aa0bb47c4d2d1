"""Numpy layer primitives with explicit backward passes.

Feature maps are channels-last ``(batch, height, width, channels)``. Each
``*_forward`` returns ``(out, cache)`` and the matching ``*_backward`` takes
``(dout, cache)``; parameter gradients are returned, never accumulated in
place, so callers own all state.
"""

from __future__ import annotations

import numpy as np


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# --- dense -------------------------------------------------------------------

def dense_forward(x, w, b):
    return x @ w + b, x


def dense_backward(dout, cache, w):
    x = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


# --- activations / regularisers ---------------------------------------------

def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def dropout_forward(x, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; a no-op when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, keep):
    return dout if keep is None else dout * keep


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy ``-1/N sum_n y_n . log softmax(z_n)`` for soft targets.

    Returns ``(loss, dlogits, probs)``.
    """
    n = logits.shape[0]
    logp = log_softmax(logits)
    probs = np.exp(logp)
    loss = float(-(targets * logp).sum() / n)
    # Targets are convex combinations, so each row sums to one.
    return loss, (probs - targets) / n, probs


def one_hot(labels: np.ndarray, n_classes: int, dtype=np.float32) -> np.ndarray:
    out = np.zeros((len(labels), n_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


# --- convolution -----------------------------------------------------------

def conv3x3_forward(x, w):
    """'Same' 3x3 convolution, stride 1, no bias. ``w`` is (3, 3, C_in, C_out)."""
    b, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((b * h * wd, w.shape[3]), dtype=np.result_type(x, w))
    for dy in range(3):
        for dx in range(3):
            out += xp[:, dy:dy + h, dx:dx + wd, :].reshape(-1, c) @ w[dy, dx]
    return out.reshape(b, h, wd, -1), xp


def conv3x3_backward(dout, xp, w):
    b, h, wd, co = dout.shape
    c = xp.shape[3]
    d2 = dout.reshape(-1, co)
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    for dy in range(3):
        for dx in range(3):
            dw[dy, dx] = xp[:, dy:dy + h, dx:dx + wd, :].reshape(-1, c).T @ d2
            dxp[:, dy:dy + h, dx:dx + wd, :] += (d2 @ w[dy, dx].T).reshape(b, h, wd, c)
    return dxp[:, 1:-1, 1:-1, :], dw


# --- batch norm --------------------------------------------------------------

def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool,
                      momentum: float = 0.9, eps: float = 1e-5):
    """Per-channel normalisation over all non-channel axes.

    In training mode batch statistics are used and the updated running
    statistics are returned alongside the output; in eval mode the running
    statistics are used unchanged.
    """
    axes = tuple(range(x.ndim - 1))
    if train:
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * running_mean + (1 - momentum) * mu
        new_var = momentum * running_var + (1 - momentum) * var
    else:
        mu, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    out = gamma * xhat + beta
    return out, (xhat, inv_std, gamma, train), (new_mean, new_var)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if not train:
        return dxhat * inv_std, dgamma, dbeta
    n = dout.size // dout.shape[-1]
    dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


# --- pooling -----------------------------------------------------------------

def avgpool2_forward(x):
    """2x2 average pooling, stride 2; an odd trailing row/column is dropped."""
    b, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    out = x[:, :2 * h2, :2 * w2, :].reshape(b, h2, 2, w2, 2, c).mean(axis=(2, 4))
    return out, x.shape


def avgpool2_backward(dout, in_shape):
    b, h, w, c = in_shape
    h2, w2 = dout.shape[1], dout.shape[2]
    dx = np.zeros(in_shape, dtype=dout.dtype)
    spread = np.broadcast_to((dout / 4)[:, :, None, :, None, :], (b, h2, 2, w2, 2, c))
    dx[:, :2 * h2, :2 * w2, :] = spread.reshape(b, 2 * h2, 2 * w2, c)
    return dx


def global_pool_forward(x):
    """Per-channel max over space plus mean over space: (B, H, W, C) -> (B, C)."""
    b, h, w, c = x.shape
    flat = x.reshape(b, h * w, c)
    arg = flat.argmax(axis=1)
    out = np.take_along_axis(flat, arg[:, None, :], axis=1)[:, 0, :] + flat.mean(axis=1)
    return out, (x.shape, arg)


def global_pool_backward(dout, cache):
    (b, h, w, c), arg = cache
    dflat = np.broadcast_to((dout / (h * w))[:, None, :], (b, h * w, c)).copy()
    bi = np.arange(b)[:, None]
    ci = np.arange(c)[None, :]
    dflat[bi, arg, ci] += dout
    return dflat.reshape(b, h, w, c)


# --- optimiser ---------------------------------------------------------------

class Adam:
    """Adam over a dict of named arrays; updates the arrays in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name, g in grads.items():
            p, m, v = self.params[name], self.m[name], self.v[name]
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.dtype, copy=False)
