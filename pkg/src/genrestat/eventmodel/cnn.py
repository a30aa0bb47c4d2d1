"""VGG-style event tagger: 12 conv-BN-ReLU layers, one 2x2 average pool,
max+mean global pooling and two fully connected layers ending in a softmax.

``width_scale`` multiplies every channel count (and the hidden FC width) so
the same layer sequence can be run at desk scale; scale 1 is the full
64 ... 2048 channel network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..errors import ContractViolation, NumericOverflowError

# (channels, dropout after the block); "pool" marks the 2x2 average pool.
CONV_PLAN = (
    (64, 0.0), (64, 0.2),
    (128, 0.0), (128, 0.2),
    (256, 0.0), (256, 0.2),
    (512, 0.0), (512, 0.0),
    "pool",
    (1024, 0.0), (1024, 0.3),
    (2048, 0.0), (2048, 0.0),
)
POOL_DROPOUT = 0.3
GLOBAL_DROPOUT = 0.5
FC_WIDTH = 2048
FC_DROPOUT = 0.5
INPUT_HW = (64, 496)


@dataclass(frozen=True)
class CnnConfig:
    n_events: int = 527
    width_scale: float = 1.0
    seed: int = 0
    dropout: bool = True
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.n_events < 2:
            raise ContractViolation("n_events must be >= 2")
        if not 0 < self.width_scale <= 1:
            raise ContractViolation("width_scale must lie in (0, 1]")

    def scaled(self, channels: int) -> int:
        return max(1, int(round(channels * self.width_scale)))

    @property
    def conv_channels(self) -> list[int]:
        return [self.scaled(p[0]) for p in CONV_PLAN if p != "pool"]

    @property
    def fc_width(self) -> int:
        return self.scaled(FC_WIDTH)


WeightStore = dict  # ordered name -> ndarray


def init_weights(cfg: CnnConfig, dtype=np.float32) -> WeightStore:
    """Kaiming-uniform (fan-in) kernels, BN gain 1 / bias 0, unit running variance."""
    rng = np.random.default_rng(cfg.seed)
    w: WeightStore = {}
    c_in = 1
    for i, c_out in enumerate(cfg.conv_channels):
        w[f"conv{i}.weight"] = nn.kaiming_uniform(rng, (3, 3, c_in, c_out), 9 * c_in, dtype)
        w[f"bn{i}.gamma"] = np.ones(c_out, dtype)
        w[f"bn{i}.beta"] = np.zeros(c_out, dtype)
        w[f"bn{i}.running_mean"] = np.zeros(c_out, dtype)
        w[f"bn{i}.running_var"] = np.ones(c_out, dtype)
        c_in = c_out
    w["fc1.weight"] = nn.kaiming_uniform(rng, (c_in, cfg.fc_width), c_in, dtype)
    w["fc1.bias"] = np.zeros(cfg.fc_width, dtype)
    w["fc2.weight"] = nn.kaiming_uniform(rng, (cfg.fc_width, cfg.n_events), cfg.fc_width, dtype)
    w["fc2.bias"] = np.zeros(cfg.n_events, dtype)
    return w


def trainable(name: str) -> bool:
    return not name.endswith(("running_mean", "running_var"))


def check_weights(w: WeightStore, cfg: CnnConfig) -> None:
    expected = init_shapes(cfg)
    if list(w) != list(expected):
        raise ContractViolation("weight names do not match the configuration")
    for name, shape in expected.items():
        if w[name].shape != shape:
            raise ContractViolation(f"{name}: shape {w[name].shape} != {shape}")
        if name.endswith("running_var") and np.any(w[name] <= 0):
            raise ContractViolation(f"{name}: running variance must be positive")


def init_shapes(cfg: CnnConfig) -> dict[str, tuple]:
    shapes = {}
    c_in = 1
    for i, c_out in enumerate(cfg.conv_channels):
        shapes[f"conv{i}.weight"] = (3, 3, c_in, c_out)
        for s in ("gamma", "beta", "running_mean", "running_var"):
            shapes[f"bn{i}.{s}"] = (c_out,)
        c_in = c_out
    shapes["fc1.weight"] = (c_in, cfg.fc_width)
    shapes["fc1.bias"] = (cfg.fc_width,)
    shapes["fc2.weight"] = (cfg.fc_width, cfg.n_events)
    shapes["fc2.bias"] = (cfg.n_events,)
    return shapes


def shape_trace(cfg: CnnConfig, input_hw: tuple[int, int] = (64, 496)) -> list[tuple[int, ...]]:
    """Output shape of each architecture row, computed without running the net."""
    h, w = input_hw
    trace = []
    conv = iter(cfg.conv_channels)
    for p in CONV_PLAN:
        if p == "pool":
            h, w = h // 2, w // 2
            trace.append((h, w, c))
        else:
            c = next(conv)
            trace.append((h, w, c))
    trace += [(c,), (cfg.fc_width,), (cfg.n_events,)]
    return trace


def _as_batch(batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        x = np.stack([getattr(s, "values", s) for s in batch])
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ContractViolation(f"expected (batch, mels, frames) input, got shape {x.shape}")
    return x[..., None]


def forward_logits(x: np.ndarray, w: WeightStore, cfg: CnnConfig, train_mode: bool = False,
                   rng: np.random.Generator | None = None, keep_cache: bool = False,
                   trace: list | None = None):
    """Run the network on ``x`` of shape (B, H, W, 1).

    Returns ``(logits, caches, running_stats)``; ``caches`` is None unless
    ``keep_cache``. Dropout is drawn from ``rng`` only when ``train_mode`` and
    ``cfg.dropout`` are both set.
    """
    drop_rng = rng if (train_mode and cfg.dropout) else None
    caches = [] if keep_cache else None
    stats = {}
    h = x.astype(w["conv0.weight"].dtype, copy=False)
    i = 0
    for p in CONV_PLAN:
        if p == "pool":
            h, pc = nn.avgpool2_forward(h)
            h, dc = nn.dropout_forward(h, POOL_DROPOUT, drop_rng)
            if keep_cache:
                caches.append(("pool", pc, dc))
        else:
            h, cc = nn.conv3x3_forward(h, w[f"conv{i}.weight"])
            h, bc, (rm, rv) = nn.batchnorm_forward(
                h, w[f"bn{i}.gamma"], w[f"bn{i}.beta"], w[f"bn{i}.running_mean"],
                w[f"bn{i}.running_var"], train_mode, cfg.bn_momentum, cfg.bn_eps)
            stats[f"bn{i}.running_mean"], stats[f"bn{i}.running_var"] = rm, rv
            h, rc = nn.relu_forward(h)
            h, dc = nn.dropout_forward(h, p[1], drop_rng)
            if keep_cache:
                caches.append(("conv", i, cc, bc, rc, dc))
            i += 1
        if trace is not None:
            trace.append(h.shape[1:])
    h, gc = nn.global_pool_forward(h)
    h, gd = nn.dropout_forward(h, GLOBAL_DROPOUT, drop_rng)
    if trace is not None:
        trace.append(h.shape[1:])
    h, f1 = nn.dense_forward(h, w["fc1.weight"], w["fc1.bias"])
    h, r1 = nn.relu_forward(h)
    h, d1 = nn.dropout_forward(h, FC_DROPOUT, drop_rng)
    if trace is not None:
        trace.append(h.shape[1:])
    logits, f2 = nn.dense_forward(h, w["fc2.weight"], w["fc2.bias"])
    if trace is not None:
        trace.append(logits.shape[1:])
    if not np.all(np.isfinite(logits)):
        raise NumericOverflowError("non-finite activation in the event model")
    if keep_cache:
        caches.append(("head", gc, gd, f1, r1, d1, f2))
    return logits, caches, stats


def backward(dlogits: np.ndarray, caches: list, w: WeightStore) -> dict[str, np.ndarray]:
    """Gradients of the loss for every trainable tensor, given d(loss)/d(logits)."""
    grads = {}
    _, gc, gd, f1, r1, d1, f2 = caches[-1]
    dh, grads["fc2.weight"], grads["fc2.bias"] = nn.dense_backward(dlogits, f2, w["fc2.weight"])
    dh = nn.relu_backward(nn.dropout_backward(dh, d1), r1)
    dh, grads["fc1.weight"], grads["fc1.bias"] = nn.dense_backward(dh, f1, w["fc1.weight"])
    dh = nn.global_pool_backward(nn.dropout_backward(dh, gd), gc)
    for entry in reversed(caches[:-1]):
        if entry[0] == "pool":
            _, pc, dc = entry
            dh = nn.avgpool2_backward(nn.dropout_backward(dh, dc), pc)
        else:
            _, i, cc, bc, rc, dc = entry
            dh = nn.relu_backward(nn.dropout_backward(dh, dc), rc)
            dh, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = nn.batchnorm_backward(dh, bc)
            dh, grads[f"conv{i}.weight"] = nn.conv3x3_backward(dh, cc, w[f"conv{i}.weight"])
    return grads


def forward(batch, w: WeightStore, cfg: CnnConfig, train_mode: bool = False,
            rng: np.random.Generator | None = None, batch_size: int = 8,
            input_hw: tuple[int, int] | None = INPUT_HW) -> np.ndarray:
    """Event probabilities, one softmax row per input spectrogram.

    In eval mode the input is processed in chunks of ``batch_size``; batch
    norm then uses running statistics so chunking does not change results.
    ``input_hw=None`` accepts any spectrogram size (the net is convolutional
    up to the global pooling).
    """
    x = _as_batch(batch)
    if input_hw is not None and x.shape[1:3] != tuple(input_hw):
        raise ContractViolation(f"expected {input_hw[0]}x{input_hw[1]} spectrograms, got {x.shape[1:3]}")
    check_weights(w, cfg)
    if train_mode:
        logits, _, _ = forward_logits(x, w, cfg, True, rng)
        return nn.softmax(logits)
    out = [nn.softmax(forward_logits(x[s:s + batch_size], w, cfg)[0])
           for s in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, cfg.n_events), dtype=np.float32)
