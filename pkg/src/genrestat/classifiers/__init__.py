"""Back-end genre classifiers behind one ``fit`` / ``predict`` contract.

Five models: multinomial logistic regression (``lr``), one-vs-rest RBF SVM
(``svm``), a Gini decision tree (``dt``), a random forest (``rf``) and a
mixup-trained MLP (``mlp``). Defaults follow the usual back-end settings:
C = 1 with an RBF kernel, depth-20 trees, 100 forest trees, and hidden
widths 2048/4096/4096/1024 with dropout 0.2/0.3/0.4/0.5.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ContractViolation, DegenerateTrainingError, FormatError, InvalidInputError
from ..weightio import load_tensors, save_tensors
from . import logistic, mlp, svm, tree
from .mlp import mixup_batch, sample_mixup_lambda

MODELS = ("lr", "svm", "dt", "rf", "mlp")
MLP_WIDTHS = (2048, 4096, 4096, 1024)
MLP_DROPOUT = (0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class ClassifierSpec:
    model: str
    seed: int = 0
    # lr
    l2_c: float = 1.0
    # svm
    c: float = 1.0
    gamma: float | None = None
    svm_tol: float = 1e-3
    svm_max_iter: int = 10_000
    # dt / rf
    max_depth: int = 20
    n_trees: int = 100
    max_features: Any = "auto"  # dt: every feature, rf: sqrt(D)
    bootstrap: bool = True
    # mlp
    widths: tuple[int, ...] = MLP_WIDTHS
    dropout: tuple[float, ...] = MLP_DROPOUT
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    mixup_alpha: float | None = 0.2

    def __post_init__(self):
        if self.model not in MODELS:
            raise ContractViolation(f"model must be one of {MODELS}, got {self.model!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "dropout", tuple(float(p) for p in self.dropout))
        if any(w < 1 for w in self.widths):
            raise ContractViolation("MLP widths must be positive")
        if len(self.widths) != len(self.dropout):
            raise ContractViolation("one dropout rate per MLP hidden layer")
        if self.max_depth < 1 or self.n_trees < 1:
            raise ContractViolation("max_depth and n_trees must be >= 1")
        if self.c <= 0 or self.l2_c <= 0:
            raise ContractViolation("regularisation constants must be positive")

    def with_(self, **changes) -> "ClassifierSpec":
        return dataclasses.replace(self, **changes)


def scaled_mlp_widths(scale: float) -> tuple[int, ...]:
    return tuple(max(1, int(round(w * scale))) for w in MLP_WIDTHS)


def _max_features(spec: ClassifierSpec):
    if spec.max_features != "auto":
        return spec.max_features
    return "sqrt" if spec.model == "rf" else None


@dataclass
class FittedModel:
    spec: ClassifierSpec
    params: dict[str, np.ndarray]
    n_classes: int
    n_features: int
    info: dict[str, Any] = field(default_factory=dict)


def _validate_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or len(x) != len(y):
        raise ContractViolation("X must be N x D with one label per row")
    if len(x) < 2:
        raise DegenerateTrainingError("need at least two training rows")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features must be finite")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
        raise ContractViolation("labels must be non-negative integer codes")
    if len(np.unique(y)) < 2:
        raise DegenerateTrainingError("need at least two classes")
    return x, y.astype(np.int64)


def fit(spec: ClassifierSpec, x, y, n_classes: int | None = None) -> FittedModel:
    x, y = _validate_xy(x, y)
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= k:
        raise ContractViolation(f"labels must lie in [0, {k})")
    info: dict[str, Any] = {}
    if spec.model == "lr":
        params = logistic.fit_logistic(x, y, k, spec.l2_c)
    elif spec.model == "svm":
        params = svm.fit_svm(x, y, k, spec.c, spec.gamma, spec.svm_tol, spec.svm_max_iter)
    elif spec.model == "dt":
        t = tree.grow_tree(x, y, k, spec.max_depth, _max_features(spec), np.random.default_rng([spec.seed, 0]))
        params = tree.pack_trees([t])
    elif spec.model == "rf":
        trees = tree.fit_forest(x, y, k, spec.n_trees, spec.max_depth, _max_features(spec),
                                spec.bootstrap, spec.seed)
        params = tree.pack_trees(trees)
    else:
        params, trace = mlp.train_mlp(x, y, k, spec.widths, spec.dropout, spec.epochs,
                                      spec.batch_size, spec.lr, spec.mixup_alpha, spec.seed)
        info["loss_trace"] = trace
    return FittedModel(spec, params, k, x.shape[1], info)


def predict(model: FittedModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Labels and per-class scores.

    Scores are softmax probabilities (lr, mlp), leaf class frequencies (dt),
    vote fractions (rf) or one-vs-rest decision values (svm).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ContractViolation(f"expected {model.n_features} features, got {x.shape[1]}")
    kind = model.spec.model
    if kind == "lr":
        scores = logistic.predict_logistic(model.params, x)
    elif kind == "svm":
        scores = svm.decision_function(model.params, x)
    elif kind == "dt":
        scores = tree.tree_predict_proba(tree.unpack_trees(model.params)[0], x)
    elif kind == "rf":
        scores = tree.forest_votes(tree.unpack_trees(model.params), x, model.n_classes)
    else:
        scores = mlp.predict_mlp(model.params, x, len(model.spec.widths))
    return scores.argmax(axis=1), scores


def _spec_to_meta(spec: ClassifierSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["widths"] = list(spec.widths)
    d["dropout"] = list(spec.dropout)
    return d


def save_model(path: str | os.PathLike, model: FittedModel, extra: dict | None = None) -> None:
    meta = {"model": "classifier", "kind": model.spec.model, "spec": _spec_to_meta(model.spec),
            "n_classes": model.n_classes, "n_features": model.n_features}
    meta.update(extra or {})
    # Tree thresholds and SVM support vectors keep float64 so predictions survive.
    dtype = "float32" if model.spec.model == "mlp" else "keep"
    save_tensors(path, model.params, meta, dtype=dtype)


def load_model(path: str | os.PathLike) -> FittedModel:
    params, meta = load_tensors(path)
    if meta.get("model") != "classifier":
        raise FormatError(f"{path}: not a classifier file")
    spec = ClassifierSpec(**meta["spec"])
    return FittedModel(spec, params, int(meta["n_classes"]), int(meta["n_features"]))


__all__ = [
    "MODELS", "ClassifierSpec", "FittedModel", "fit", "predict", "mixup_batch",
    "sample_mixup_lambda", "save_model", "load_model", "scaled_mlp_widths",
]
