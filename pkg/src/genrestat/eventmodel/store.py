"""Event-model weights in the shared tensor container."""

from __future__ import annotations

import dataclasses
import os
from typing import Any

from ..errors import FormatError
from ..weightio import load_tensors, save_tensors
from .cnn import CnnConfig, WeightStore, check_weights


def save_weights(path: str | os.PathLike, weights: WeightStore, cfg: CnnConfig,
                 extra: dict[str, Any] | None = None) -> None:
    meta = {"model": "event_cnn", "config": dataclasses.asdict(cfg)}
    meta.update(extra or {})
    save_tensors(path, weights, meta)


def load_weights(path: str | os.PathLike) -> tuple[WeightStore, CnnConfig, dict[str, Any]]:
    tensors, meta = load_tensors(path)
    if meta.get("model") != "event_cnn":
        raise FormatError(f"{path}: not an event-model weight file")
    cfg = CnnConfig(**meta["config"])
    try:
        check_weights(tensors, cfg)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return tensors, cfg, meta
