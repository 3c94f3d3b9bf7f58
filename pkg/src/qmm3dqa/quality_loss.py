"""Training objective: mean squared error, pairwise rank error, and their
weighted combination, with analytic gradients w.r.t. the predictions.

The rank term averages a hinge over all n^2 ordered prediction pairs
(including the zero-contribution diagonal): a pair is penalized when the
predicted gap exceeds or contradicts the label gap taken in the
direction the predictions are ordered.  Subgradient conventions are
fixed for determinism: 0 exactly at the hinge boundary, and the
derivative of ``|Qa - Qb|`` uses sign(0) = +1; the direction indicator
is treated as a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, LengthMismatch


@dataclass(frozen=True)
class LossConfig:
    """Weights of the two loss components (both default to 1)."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossValue:
    total: float
    mse: float
    rank: float
    grad: np.ndarray  # d total / d predictions, batch length


def _check(pred: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(pred, dtype=np.float64).ravel()
    qp = np.asarray(labels, dtype=np.float64).ravel()
    if q.size == 0:
        raise EmptyBatch("loss on empty batch")
    if q.size != qp.size:
        raise LengthMismatch(f"{q.size} predictions vs {qp.size} labels")
    return q, qp


def mse_loss(pred, labels) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient 2(Q - Q')/n."""
    q, qp = _check(pred, labels)
    resid = q - qp
    n = q.size
    # Divergence surfaces as a non-finite value, not a warning.
    with np.errstate(over="ignore", invalid="ignore"):
        return float(resid @ resid / n), 2.0 * resid / n


def rank_loss(pred, labels) -> tuple[float, np.ndarray]:
    """Pairwise hinge rank error over all ordered pairs and a subgradient."""
    q, qp = _check(pred, labels)
    n = q.size
    with np.errstate(over="ignore", invalid="ignore"):
        dq = q[:, None] - q[None, :]
        dl = qp[:, None] - qp[None, :]
        direction = np.where(dq >= 0, 1.0, -1.0)  # sign with sign(0) = +1
        arg = np.abs(dq) - direction * dl
        value = float(np.maximum(arg, 0.0).sum() / (n * n))
    active = arg > 0.0  # zero subgradient exactly at the hinge boundary
    contrib = np.where(active, direction, 0.0)
    grad = (contrib.sum(axis=1) - contrib.sum(axis=0)) / (n * n)
    return value, grad


def combined_loss(pred, labels, cfg: LossConfig | None = None) -> LossValue:
    """Weighted sum of MSE and rank error with the combined gradient."""
    cfg = cfg or LossConfig()
    mse, g_mse = mse_loss(pred, labels)
    rank, g_rank = rank_loss(pred, labels)
    total = cfg.lambda1 * mse + cfg.lambda2 * rank
    grad = cfg.lambda1 * g_mse + cfg.lambda2 * g_rank
    return LossValue(total=total, mse=mse, rank=rank, grad=grad)
