"""Loss functions and their exact gradients.

The training objective is a convex combination of a regression MSE (next-day
normalized return) and a 3-class cross entropy (next-day sentiment class):

    J = mse_weight * MSE + (1 - mse_weight) * CE
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .matrix import Matrix

PROB_FLOOR = 1e-12  # clamp applied before the log; the gradient ignores it


@dataclass(frozen=True)
class JointLossConfig:
    """mse_weight is the coefficient on the MSE term, in [0, 1]."""

    mse_weight: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.mse_weight <= 1.0:
            raise ShapeError(f"mse_weight must lie in [0, 1], got {self.mse_weight}")


def mse(pred: Matrix, target: Matrix) -> float:
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    return float(np.mean(diff * diff))


def mse_grad(pred: Matrix, target: Matrix) -> Matrix:
    """d mse / d pred = 2 (pred - target) / n."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    n = pred.rows * pred.cols
    return Matrix._wrap(2.0 * (pred.data - target.data) / n)


def cross_entropy(logits: Matrix, label: int) -> float:
    """-log softmax(logits)[label], probabilities clamped below at 1e-12."""
    c = logits.rows
    if logits.cols != 1:
        raise ShapeError(f"logits must be a column, got {logits.shape}")
    if not 0 <= label < c:
        raise ShapeError(f"label {label} out of range for {c} classes")
    shifted = logits.data - logits.data.max()
    ex = np.exp(shifted)
    probs = ex / ex.sum()
    return float(-np.log(max(PROB_FLOOR, float(probs[label, 0]))))


def cross_entropy_grad(logits: Matrix, label: int) -> Matrix:
    """d CE / d logits = softmax(logits) - onehot(label)."""
    c = logits.rows
    if logits.cols != 1:
        raise ShapeError(f"logits must be a column, got {logits.shape}")
    if not 0 <= label < c:
        raise ShapeError(f"label {label} out of range for {c} classes")
    shifted = logits.data - logits.data.max()
    ex = np.exp(shifted)
    probs = ex / ex.sum()
    grad = probs.copy()
    grad[label, 0] -= 1.0
    return Matrix._wrap(grad)


def joint_loss(mse_val: float, ce_val: float, cfg: JointLossConfig) -> float:
    return cfg.mse_weight * mse_val + (1.0 - cfg.mse_weight) * ce_val
