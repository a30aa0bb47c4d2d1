"""Soft-margin RBF support vector machine trained by SMO, one-vs-rest."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(x: np.ndarray) -> float:
    """``1 / (D * var(X))`` over all entries; 1.0 for constant data."""
    var = float(x.var())
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


def smo(kernel: np.ndarray, y: np.ndarray, c: float = 1.0, tol: float = 1e-3,
        max_iter: int = 10_000) -> tuple[np.ndarray, float, int]:
    """Solve the binary dual ``min 1/2 a'Qa - e'a`` s.t. ``0 <= a <= C``, ``y'a = 0``.

    Working pairs are chosen by maximal violation for ``i`` and second-order
    gain for ``j``. ``y`` holds +/-1. Returns ``(alpha, rho, iterations)``; the
    decision function is ``sum_t alpha_t y_t K(x_t, x) - rho``.
    """
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(kernel)
    it = 0
    for it in range(1, max_iter + 1):
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        score = -y * grad
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_up = score[i]
        cand = low & (score < m_up)
        if not cand.any() or m_up - score[low].min() < tol:
            break
        b = m_up - score
        a = diag[i] + diag - 2.0 * kernel[i]
        a = np.where(a > 0, a, TAU)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))

        step = b[j] / a[j]
        bound_i = c - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = alpha[j] if y[j] > 0 else c - alpha[j]
        step = min(step, bound_i, bound_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        alpha[i] = min(max(alpha[i], 0.0), c)
        alpha[j] = min(max(alpha[j], 0.0), c)
        grad += step * y * (kernel[i] - kernel[j])
    else:
        log.warning("SMO stopped at max_iter=%d before reaching tol=%g", max_iter, tol)
    return alpha, _rho(alpha, grad, y, c), it


def _rho(alpha, grad, y, c) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= c
    ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
    return float((ub + lb) / 2)


def fit_svm(x: np.ndarray, y: np.ndarray, n_classes: int, c: float = 1.0, gamma: float | None = None,
            tol: float = 1e-3, max_iter: int = 10_000) -> dict[str, np.ndarray]:
    gamma = default_gamma(x) if gamma is None else gamma
    kernel = rbf_kernel(x, x, gamma)
    dual = np.zeros((n_classes, len(x)))
    rho = np.zeros(n_classes)
    for cls in range(n_classes):
        yy = np.where(y == cls, 1.0, -1.0)
        if np.all(yy < 0):
            # Class absent from training data: never the argmax.
            rho[cls] = 1.0
            continue
        alpha, rho[cls], _ = smo(kernel, yy, c, tol, max_iter)
        dual[cls] = alpha * yy
    keep = np.flatnonzero(np.any(dual != 0, axis=0))
    return {"support": x[keep].copy(), "dual_coef": dual[:, keep].copy(), "rho": rho,
            "gamma": np.array([gamma])}


def decision_function(params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    k = rbf_kernel(x, params["support"], float(params["gamma"][0]))
    return k @ params["dual_coef"].T - params["rho"]
