"""Programme-level embeddings from per-segment event probabilities.

Each segment is tagged with its ``k`` most probable events. ``mean-num-k``
counts how often every event is tagged and normalises by ``k * S``;
``mean-prob-k`` sums the probability mass of tagged events and normalises
to unit total; ``combined`` concatenates the two.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text
from .errors import ContractViolation, EmptyProgrammeError, FormatError
from .eventmodel.probfile import SegmentProbabilities

KINDS = ("num", "prob", "combined")


@dataclass
class ProgrammeEmbedding:
    vector: np.ndarray
    kind: str
    k: int
    programme_id: str = ""


def _probs(sp) -> np.ndarray:
    probs = sp.probs if isinstance(sp, SegmentProbabilities) else sp
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ContractViolation("segment probabilities must be an S x M matrix")
    if probs.shape[0] == 0:
        raise EmptyProgrammeError("programme has no segments")
    return probs


def _check_k(k: int, m: int) -> None:
    if not 1 <= k <= m:
        raise ContractViolation(f"k must satisfy 1 <= k <= M = {m}, got k = {k}")


def topk_mask(probs: np.ndarray, k: int) -> np.ndarray:
    """Boolean (S, M) mask of each row's top-k events; ties go to the lower index."""
    probs = np.atleast_2d(probs)
    _check_k(k, probs.shape[1])
    # Stable sort on -p keeps equal probabilities in index order.
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    mask = np.zeros(probs.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def topk_tags(row, k: int) -> set[int]:
    return set(np.flatnonzero(topk_mask(np.asarray(row, dtype=np.float64), k)[0]).tolist())


def tag_counts(sp, k: int) -> np.ndarray:
    """Integer counts n_i of segments whose top-k set contains event i."""
    probs = _probs(sp)
    return topk_mask(probs, k).sum(axis=0)


def _pid(sp) -> str:
    return getattr(sp, "programme_id", "")


def mean_num(sp, k: int) -> ProgrammeEmbedding:
    counts = tag_counts(sp, k)
    s = _probs(sp).shape[0]
    return ProgrammeEmbedding(counts / (k * s), "num", k, _pid(sp))


def mean_prob(sp, k: int) -> ProgrammeEmbedding:
    probs = _probs(sp)
    mass = np.where(topk_mask(probs, k), probs, 0.0).sum(axis=0)
    total = mass.sum()
    if not total > 0:
        raise ContractViolation("tagged probability mass is zero; rows are not valid softmax output")
    return ProgrammeEmbedding(mass / total, "prob", k, _pid(sp))


def combined(sp, k: int) -> ProgrammeEmbedding:
    vec = np.concatenate([mean_num(sp, k).vector, mean_prob(sp, k).vector])
    return ProgrammeEmbedding(vec, "combined", k, _pid(sp))


def embed(sp, kind: str, k: int) -> ProgrammeEmbedding:
    if kind == "num":
        return mean_num(sp, k)
    if kind == "prob":
        return mean_prob(sp, k)
    if kind == "combined":
        return combined(sp, k)
    raise ContractViolation(f"embedding kind must be one of {KINDS}, got {kind!r}")


# --- CSV ---------------------------------------------------------------------

def embeddings_to_csv(rows: list[tuple[ProgrammeEmbedding, str]]) -> str:
    """Rows of (embedding, genre); floats use 17 significant digits."""
    if not rows:
        raise ContractViolation("no embeddings to write")
    dim = len(rows[0][0].vector)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["programme_id", "genre", "kind", "k"] + [f"v{i}" for i in range(dim)])
    for emb, genre in rows:
        if len(emb.vector) != dim:
            raise ContractViolation("all embeddings in one file must share a dimension")
        writer.writerow([emb.programme_id, genre, emb.kind, emb.k]
                        + [format(float(v), ".17g") for v in emb.vector])
    return buf.getvalue()


def write_embeddings(path: str | os.PathLike, rows: list[tuple[ProgrammeEmbedding, str]]) -> None:
    atomic_write_text(path, embeddings_to_csv(rows))


def read_embeddings(path: str | os.PathLike) -> list[tuple[ProgrammeEmbedding, str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:4] != ["programme_id", "genre", "kind", "k"]:
            raise FormatError(f"{path}: expected header programme_id,genre,kind,k,v0..")
        dim = len(header) - 4
        if header[4:] != [f"v{i}" for i in range(dim)]:
            raise FormatError(f"{path}: value columns must be v0..v{dim - 1}")
        out = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 4:
                raise FormatError(f"{path}:{line}: expected {dim + 4} fields, got {len(row)}")
            try:
                vec = np.array([float(v) for v in row[4:]])
                k = int(row[3])
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from exc
            out.append((ProgrammeEmbedding(vec, row[2], k, row[0]), row[1]))
    return out
