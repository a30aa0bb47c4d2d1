"""Mini-batch Adam training of the event tagger on labelled spectrogram clips."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..errors import ContractViolation, DegenerateTrainingError
from .cnn import CnnConfig, WeightStore, backward, forward, forward_logits, init_weights, trainable

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    weights: WeightStore
    loss_trace: list[float] = field(default_factory=list)


def train_events(x: np.ndarray, labels: np.ndarray, cfg: CnnConfig, epochs: int = 100,
                 lr: float = 1e-3, batch_size: int = 16, crop_frames: int | None = None,
                 dtype=np.float32) -> TrainResult:
    """Minimise mean cross-entropy of the softmax output with Adam.

    ``x`` is (N, mels, frames); ``labels`` holds either integer event ids or
    (N, M) soft target rows. With ``crop_frames`` set, every example in
    every epoch is a random time crop of that many frames; the network is
    fully convolutional up to the global pooling, so inference still runs on
    whole spectrograms. All randomness (order, crops, dropout) derives from
    ``cfg.seed``.
    """
    x = np.asarray(x, dtype=dtype)
    labels = np.asarray(labels)
    if x.ndim != 3 or len(x) != len(labels):
        raise ContractViolation("x must be (N, mels, frames) with one label per clip")
    if labels.ndim == 2:
        if labels.shape[1] != cfg.n_events or np.any(labels < 0) or \
                not np.allclose(labels.sum(axis=1), 1.0):
            raise ContractViolation(f"soft targets must be probability rows over {cfg.n_events} events")
        targets = labels.astype(dtype)
        labels = labels.argmax(axis=1)
    else:
        labels = labels.astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= cfg.n_events):
            raise ContractViolation(f"labels must lie in [0, {cfg.n_events})")
        targets = nn.one_hot(labels, cfg.n_events, dtype)
    if len(np.unique(labels)) < 2:
        raise DegenerateTrainingError("event training needs at least two classes")
    if epochs < 0:
        raise ContractViolation("epochs must be >= 0")

    weights = init_weights(cfg, dtype)
    params = {k: v for k, v in weights.items() if trainable(k)}
    opt = nn.Adam(params, lr=lr)
    rng = np.random.default_rng([cfg.seed, 1])
    n, frames = len(x), x.shape[2]
    crop = frames if crop_frames is None else min(crop_frames, frames)

    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            if crop < frames:
                offs = rng.integers(0, frames - crop + 1, size=len(idx))
                xb = np.stack([x[i, :, o:o + crop] for i, o in zip(idx, offs)])
            else:
                xb = x[idx]
            logits, caches, stats = forward_logits(xb[..., None], weights, cfg, True, rng,
                                                   keep_cache=True)
            loss, dlogits, _ = nn.softmax_cross_entropy(logits, targets[idx])
            opt.step(backward(dlogits, caches, weights))
            for k, v in stats.items():
                weights[k][...] = v
            total += loss * len(idx)
        trace.append(total / n)
        log.info("event model epoch %d/%d loss %.4f", epoch + 1, epochs, trace[-1])
    return TrainResult(weights, trace)


def tag_accuracy(x: np.ndarray, labels: np.ndarray, weights: WeightStore, cfg: CnnConfig) -> float:
    """Fraction of clips whose top-1 event is the true event."""
    probs = forward(x, weights, cfg)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(labels)))
