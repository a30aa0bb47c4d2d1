"""Gini decision trees and bootstrap random forests.

Trees are stored as flat node arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); leaves have ``feature == -1``. Samples go left when
``x[feature] <= threshold``.
"""

from __future__ import annotations

import math

import numpy as np


def _best_split(x: np.ndarray, y_onehot: np.ndarray, idx: np.ndarray, features) -> tuple | None:
    """Lowest weighted Gini over ``features``; ties -> lowest feature, then lowest threshold."""
    n = len(idx)
    best = None
    for f in features:
        v = x[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        valid = vs[:-1] < vs[1:]
        if not valid.any():
            continue
        left = np.cumsum(y_onehot[idx[order]], axis=0)[:-1]
        right = left[-1] + y_onehot[idx[order[-1]]] - left
        n_left = np.arange(1, n, dtype=np.float64)
        n_right = n - n_left
        # n * weighted gini = n_l - sum(l^2)/n_l + n_r - sum(r^2)/n_r
        score = n - (left * left).sum(axis=1) / n_left - (right * right).sum(axis=1) / n_right
        score = np.where(valid, score, np.inf)
        p = int(np.argmin(score))
        cand = (score[p], f, (vs[p] + vs[p + 1]) / 2.0)
        if best is None or cand[:2] < best[:2]:
            best = cand
    return best


def _n_visit(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    return max(1, min(int(max_features), d))


def grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int = 20,
              max_features=None, rng: np.random.Generator | None = None,
              sample_weight_idx: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Grow one tree depth-first.

    ``max_features`` (None, "sqrt" or an int) caps how many non-constant
    features are examined per split; candidates are visited in a random
    order drawn from ``rng`` and constant features do not count toward the
    cap. ``sample_weight_idx`` lists the (possibly repeated) training rows,
    e.g. a bootstrap sample.
    """
    rng = rng or np.random.default_rng(0)
    d = x.shape[1]
    n_visit = _n_visit(max_features, d)
    y_onehot = np.eye(n_classes)[y]
    rows = np.arange(len(x)) if sample_weight_idx is None else np.asarray(sample_weight_idx)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(y_onehot[idx].sum(axis=0))
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        if depth >= max_depth or len(idx) < 2 or np.count_nonzero(counts) <= 1:
            continue
        split = None
        if n_visit >= d:
            split = _best_split(x, y_onehot, idx, range(d))
        else:
            visited = 0
            chosen = []
            for f in rng.permutation(d):
                col = x[idx, f]
                if col.min() == col.max():
                    continue
                chosen.append(int(f))
                visited += 1
                if visited >= n_visit:
                    break
            if chosen:
                split = _best_split(x, y_onehot, idx, chosen)
        if split is None:
            continue
        _, f, thr = split
        go_left = x[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = int(f), float(thr)
        left[node], right[node] = new_node(li), new_node(ri)
        # Push right first so the left subtree is numbered first.
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return {"feature": np.array(feature, dtype=np.int64),
            "threshold": np.array(threshold, dtype=np.float64),
            "left": np.array(left, dtype=np.int64),
            "right": np.array(right, dtype=np.int64),
            "value": np.array(value, dtype=np.float64).reshape(-1, n_classes)}


def apply_tree(tree: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Leaf index reached by every row of ``x``."""
    node = np.zeros(len(x), dtype=np.int64)
    rows = np.arange(len(x))
    active = tree["feature"][node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        f = tree["feature"][nd]
        go_left = x[r, f] <= tree["threshold"][nd]
        node[r] = np.where(go_left, tree["left"][nd], tree["right"][nd])
        active = tree["feature"][node] >= 0
    return node


def tree_predict_proba(tree, x):
    counts = tree["value"][apply_tree(tree, x)]
    return counts / counts.sum(axis=1, keepdims=True)


def fit_forest(x: np.ndarray, y: np.ndarray, n_classes: int, n_trees: int = 100, max_depth: int = 20,
               max_features="sqrt", bootstrap: bool = True, seed: int = 0) -> list[dict]:
    """Each tree draws its bootstrap rows and feature order from ``(seed, tree index)``."""
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        rows = rng.integers(0, len(x), size=len(x)) if bootstrap else None
        trees.append(grow_tree(x, y, n_classes, max_depth, max_features, rng, rows))
    return trees


def forest_votes(trees: list[dict], x: np.ndarray, n_classes: int) -> np.ndarray:
    """Fraction of trees voting for each class (hard votes)."""
    votes = np.zeros((len(x), n_classes))
    for tree in trees:
        label = tree_predict_proba(tree, x).argmax(axis=1)
        votes[np.arange(len(x)), label] += 1
    return votes / len(trees)


def pack_trees(trees: list[dict]) -> dict[str, np.ndarray]:
    sizes = [len(t["feature"]) for t in trees]
    packed = {k: np.concatenate([t[k] for t in trees]) for k in trees[0]}
    packed["tree_offsets"] = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return packed


def unpack_trees(packed: dict[str, np.ndarray]) -> list[dict]:
    off = packed["tree_offsets"]
    keys = ("feature", "threshold", "left", "right", "value")
    return [{k: packed[k][off[i]:off[i + 1]] for k in keys} for i in range(len(off) - 1)]
