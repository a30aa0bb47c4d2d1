"""SEGP files: per-segment event probabilities for one programme.

Layout (little-endian): magic ``SEGP``, u32 version (1), u32 S, u32 M,
then S*M float32 values row-major.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .._io import atomic_write_bytes
from ..errors import EmptyProgrammeError, FormatError, InvalidProbabilitiesError

SEGP_MAGIC = b"SEGP"
SEGP_VERSION = 1
ROW_SUM_TOL = 1e-3
_HEADER = struct.Struct("<4sIII")


@dataclass
class SegmentProbabilities:
    probs: np.ndarray  # (S, M)
    programme_id: str = ""
    model_id: str = ""

    @property
    def n_segments(self) -> int:
        return self.probs.shape[0]

    @property
    def n_events(self) -> int:
        return self.probs.shape[1]


def validate_probabilities(probs: np.ndarray, tol: float = ROW_SUM_TOL, source: str = "") -> None:
    where = f"{source}: " if source else ""
    if probs.ndim != 2:
        raise InvalidProbabilitiesError(f"{where}expected an S x M matrix")
    if probs.shape[0] == 0:
        raise EmptyProgrammeError(f"{where}programme has no segments")
    if not np.all(np.isfinite(probs)) or probs.min() < 0 or probs.max() > 1:
        raise InvalidProbabilitiesError(f"{where}entries must be finite and within [0, 1]")
    sums = probs.sum(axis=1, dtype=np.float64)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise InvalidProbabilitiesError(
            f"{where}row {bad[0]} sums to {sums[bad[0]]:.6g}, outside 1 +/- {tol}")


def save_probabilities(sp: SegmentProbabilities, path: str | os.PathLike) -> None:
    probs = np.ascontiguousarray(sp.probs, dtype="<f4")
    validate_probabilities(probs, source=os.fspath(path))
    s, m = probs.shape
    atomic_write_bytes(path, _HEADER.pack(SEGP_MAGIC, SEGP_VERSION, s, m) + probs.tobytes())


def load_probabilities(path: str | os.PathLike, programme_id: str | None = None,
                       model_id: str = "") -> SegmentProbabilities:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated SEGP header")
    magic, version, s, m = _HEADER.unpack_from(raw)
    if magic != SEGP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SEGP_VERSION:
        raise FormatError(f"{path}: unsupported SEGP version {version}")
    if len(raw) != _HEADER.size + 4 * s * m:
        raise FormatError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, expected {4 * s * m}")
    if s == 0:
        raise EmptyProgrammeError(f"{path}: programme has no segments")
    probs = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(s, m).astype(np.float32)
    validate_probabilities(probs, source=path)
    if programme_id is None:
        programme_id = os.path.splitext(os.path.basename(path))[0]
    return SegmentProbabilities(probs, programme_id, model_id)
