"""Tensor container: a JSON manifest plus a raw little-endian blob.

``save_tensors("model.json", ...)`` writes ``model.json`` and ``model.bin``.
The manifest lists each tensor's name, shape, dtype and byte offset, and
carries free-form metadata (model kind, hyperparameters, run config).
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text, dump_json
from .errors import FormatError

CONTAINER_FORMAT = "genrestat-tensors"
CONTAINER_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8", "int32": "<i4", "int64": "<i8"}


def _blob_path(path: Path) -> Path:
    return path.with_suffix(".bin")


def save_tensors(path: str | os.PathLike, tensors: dict[str, np.ndarray],
                 meta: dict[str, Any] | None = None, dtype: str = "float32") -> None:
    """Floating tensors are stored as ``dtype`` unless already float64 and
    ``dtype='keep'``; integer tensors keep their width.
    """
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if np.issubdtype(arr.dtype, np.integer):
            tag = "int64" if arr.dtype.itemsize == 8 else "int32"
        elif dtype == "keep":
            tag = "float64" if arr.dtype == np.float64 else "float32"
        else:
            tag = dtype
        data = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag,
                        "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    manifest = {"format": CONTAINER_FORMAT, "version": CONTAINER_VERSION,
                "blob": _blob_path(path).name, "tensors": entries, "meta": meta or {}}
    atomic_write_bytes(_blob_path(path), b"".join(chunks))
    atomic_write_text(path, dump_json(manifest))


def load_tensors(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: manifest is not JSON ({exc})") from exc
    if manifest.get("format") != CONTAINER_FORMAT or manifest.get("version") != CONTAINER_VERSION:
        raise FormatError(f"{path}: not a {CONTAINER_FORMAT} v{CONTAINER_VERSION} manifest")
    blob = (path.parent / manifest["blob"]).read_bytes()
    tensors = {}
    for e in manifest["tensors"]:
        if e["dtype"] not in _DTYPES:
            raise FormatError(f"{path}: tensor {e['name']} has unknown dtype {e['dtype']}")
        dt = np.dtype(_DTYPES[e["dtype"]])
        count = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + count * dt.itemsize > len(blob) or count * dt.itemsize != e["nbytes"]:
            raise FormatError(f"{path}: tensor {e['name']} overruns the blob")
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=e["offset"])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(dt.newbyteorder("="))
    return tensors, manifest.get("meta", {})
