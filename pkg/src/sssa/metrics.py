"""Evaluation metrics: clustering error after optimal label alignment, and
relative reconstruction error."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "MetricsReport",
    "reconstruction_error",
    "reconstruction_error_missing",
    "best_label_map",
    "clustering_error",
    "compute_report",
]


@dataclass
class MetricsReport:
    e_c: float
    e_r: float
    e_r_missing_only: float
    best_map: list


def reconstruction_error(X_hat, X_true):
    """Frobenius ratio ||X_hat - X_true||_F / ||X_true||_F."""
    X_hat = np.asarray(X_hat, dtype=np.float64)
    X_true = np.asarray(X_true, dtype=np.float64)
    if X_hat.shape != X_true.shape:
        raise ValueError("shape mismatch")
    denom = np.linalg.norm(X_true)
    if denom == 0:
        raise ValueError("ground-truth matrix has zero norm")
    return float(np.linalg.norm(X_hat - X_true) / denom)


def reconstruction_error_missing(X_hat, X_true, mask):
    """Same ratio restricted to the unobserved entries.

    Diagnostic companion to :func:`reconstruction_error`: the full-matrix
    ratio is flattered by observed entries when few are missing.  Returns
    0.0 when nothing is missing.
    """
    X_hat = np.asarray(X_hat, dtype=np.float64)
    X_true = np.asarray(X_true, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if X_hat.shape != X_true.shape or mask.shape != X_true.shape:
        raise ValueError("shape mismatch")
    miss = ~mask
    if not miss.any():
        return 0.0
    num = np.linalg.norm(X_hat[miss] - X_true[miss])
    denom = np.linalg.norm(X_true[miss])
    if denom == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / denom)


def _confusion(pred, truth):
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("label vectors must be 1-D of equal length")
    if pred.size == 0:
        raise ValueError("empty label vectors")
    if pred.min() < 0 or truth.min() < 0:
        raise ValueError("labels must be nonnegative")
    kp, kt = int(pred.max()) + 1, int(truth.max()) + 1
    M = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(M, (pred, truth), 1)
    return M


def best_label_map(pred, truth):
    """Cluster-id mapping maximizing agreement, by optimal assignment.

    Returns an integer array ``m`` with ``m[p]`` the true id matched to
    predicted id ``p``.  Requires no more predicted ids than true ids.
    """
    M = _confusion(pred, truth)
    if M.shape[0] > M.shape[1]:
        raise ValueError(
            f"more predicted ids ({M.shape[0]}) than true ids ({M.shape[1]})"
        )
    rows, cols = linear_sum_assignment(-M)
    mapping = np.empty(M.shape[0], dtype=int)
    mapping[rows] = cols
    return mapping


def clustering_error(pred, truth):
    """Fraction of misclassified points under the best cluster-id bijection."""
    M = _confusion(pred, truth)
    if M.shape[0] > M.shape[1]:
        M = np.pad(M, ((0, 0), (0, M.shape[0] - M.shape[1])))
    rows, cols = linear_sum_assignment(-M)
    agreement = int(M[rows, cols].sum())
    return 1.0 - agreement / np.asarray(pred).size


def compute_report(X_hat, X_true, mask, pred, truth):
    """Bundle both metrics and the alignment into a MetricsReport."""
    return MetricsReport(
        e_c=clustering_error(pred, truth),
        e_r=reconstruction_error(X_hat, X_true),
        e_r_missing_only=reconstruction_error_missing(X_hat, X_true, mask),
        best_map=best_label_map(pred, truth).tolist(),
    )
