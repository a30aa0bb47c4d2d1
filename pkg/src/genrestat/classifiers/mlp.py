"""Fully connected back end: four FC-ReLU-dropout blocks and a softmax head,
trained with Adam on mixup-augmented batches.
"""

from __future__ import annotations

import logging

import numpy as np

from .. import nn
from ..errors import ContractViolation

log = logging.getLogger(__name__)


def init_mlp(n_in: int, widths, n_classes: int, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 7])
    params = {}
    dims = [n_in, *widths, n_classes]
    for i in range(len(dims) - 1):
        params[f"fc{i}.weight"] = nn.kaiming_uniform(rng, (dims[i], dims[i + 1]), dims[i], dtype)
        params[f"fc{i}.bias"] = np.zeros(dims[i + 1], dtype)
    return params


def mlp_forward(params, x, dropout_rates, rng: np.random.Generator | None = None):
    """Logits and backward caches. Dropout is applied only when ``rng`` is given."""
    n_hidden = len(dropout_rates)
    caches = []
    h = x
    for i in range(n_hidden):
        h, dc = nn.dense_forward(h, params[f"fc{i}.weight"], params[f"fc{i}.bias"])
        h, rc = nn.relu_forward(h)
        h, kc = nn.dropout_forward(h, dropout_rates[i], rng)
        caches.append((dc, rc, kc))
    logits, dc = nn.dense_forward(h, params[f"fc{n_hidden}.weight"], params[f"fc{n_hidden}.bias"])
    caches.append(dc)
    return logits, caches


def mlp_backward(params, dlogits, caches):
    n_hidden = len(caches) - 1
    grads = {}
    dh, grads[f"fc{n_hidden}.weight"], grads[f"fc{n_hidden}.bias"] = nn.dense_backward(
        dlogits, caches[-1], params[f"fc{n_hidden}.weight"])
    for i in reversed(range(n_hidden)):
        dc, rc, kc = caches[i]
        dh = nn.relu_backward(nn.dropout_backward(dh, kc), rc)
        dh, grads[f"fc{i}.weight"], grads[f"fc{i}.bias"] = nn.dense_backward(
            dh, dc, params[f"fc{i}.weight"])
    return grads


def mixup_batch(x: np.ndarray, y: np.ndarray, lam: float, perm: np.ndarray):
    """Convex combination of a batch with a permutation of itself."""
    if not 0.0 <= lam <= 1.0:
        raise ContractViolation(f"mixup lambda must lie in [0, 1], got {lam}")
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(len(x))):
        raise ContractViolation("perm must be a permutation of the batch indices")
    return lam * x + (1.0 - lam) * x[perm], lam * y + (1.0 - lam) * y[perm]


def sample_mixup_lambda(rng: np.random.Generator, alpha: float) -> float:
    return float(rng.beta(alpha, alpha))


def train_mlp(x: np.ndarray, y: np.ndarray, n_classes: int, widths, dropout_rates,
              epochs: int = 100, batch_size: int = 32, lr: float = 1e-3,
              mixup_alpha: float | None = 0.2, seed: int = 0, dtype=np.float32):
    """Returns ``(params, loss_trace)``; the trace holds the mean training loss per epoch."""
    if len(widths) != len(dropout_rates):
        raise ContractViolation("one dropout rate per hidden layer is required")
    x = np.asarray(x, dtype=dtype)
    targets = nn.one_hot(y, n_classes, dtype)
    params = init_mlp(x.shape[1], widths, n_classes, seed, dtype)
    opt = nn.Adam(params, lr=lr)
    rng = np.random.default_rng([seed, 11])
    trace = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], targets[idx]
            if mixup_alpha:
                lam = sample_mixup_lambda(rng, mixup_alpha)
                xb, yb = mixup_batch(xb, yb, lam, rng.permutation(len(idx)))
            logits, caches = mlp_forward(params, xb, dropout_rates, rng)
            loss, dlogits, _ = nn.softmax_cross_entropy(logits, yb)
            opt.step(mlp_backward(params, dlogits, caches))
            total += loss * len(idx)
        trace.append(total / len(x))
    return params, trace


def predict_mlp(params, x, n_hidden: int) -> np.ndarray:
    dtype = params["fc0.weight"].dtype
    logits, _ = mlp_forward(params, np.asarray(x, dtype=dtype), [0.0] * n_hidden)
    return nn.softmax(logits.astype(np.float64))
