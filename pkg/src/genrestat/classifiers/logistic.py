"""Multinomial logistic regression with an L2 penalty (the "LR" back end)."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .. import nn


def fit_logistic(x: np.ndarray, y: np.ndarray, n_classes: int, c: float = 1.0,
                 max_iter: int = 2000) -> dict[str, np.ndarray]:
    """Minimise ``C * sum_n CE(x_n, y_n) + 0.5 * ||W||^2`` (intercepts unpenalised)."""
    n, d = x.shape
    targets = nn.one_hot(y, n_classes, np.float64)

    def objective(theta):
        w = theta[:d * n_classes].reshape(d, n_classes)
        b = theta[d * n_classes:]
        logp = nn.log_softmax(x @ w + b)
        loss = -c * (targets * logp).sum() + 0.5 * (w * w).sum()
        dz = c * (np.exp(logp) - targets)
        grad = np.concatenate([(x.T @ dz + w).ravel(), dz.sum(axis=0)])
        return loss, grad

    theta0 = np.zeros(d * n_classes + n_classes)
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": 1e-10, "ftol": 1e-14})
    theta = res.x
    return {"weight": theta[:d * n_classes].reshape(d, n_classes).copy(),
            "bias": theta[d * n_classes:].copy()}


def predict_logistic(params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    return nn.softmax(x @ params["weight"] + params["bias"])
