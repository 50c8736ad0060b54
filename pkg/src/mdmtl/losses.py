"""Hinge loss for binary (+/-1) labels, softmax cross-entropy for multi-class."""

import enum

import numpy as np

__all__ = ["LossKind", "loss_value_grad", "predict_labels", "error_rate"]


class LossKind(str, enum.Enum):
    HINGE = "hinge"
    CROSS_ENTROPY = "cross_entropy"


def _hinge(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    shape = s.shape
    if s.ndim == 2:
        if s.shape[1] != 1:
            raise ValueError(f"hinge loss needs a single score per instance, got {s.shape}")
        s = s[:, 0]
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("hinge loss labels must be -1 or +1")
    margin = y * s
    value = np.maximum(0.0, 1.0 - margin)
    # subgradient 0 at the kink
    grad = np.where(margin < 1.0, -y, 0.0)
    return value, grad.reshape(shape)


def _cross_entropy(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    y = np.atleast_1d(np.asarray(labels))
    n, c = s.shape
    if c < 2:
        raise ValueError("cross-entropy needs at least two classes")
    if y.shape[0] != n or not np.issubdtype(y.dtype, np.integer) and not np.all(y == np.round(y)):
        raise ValueError("cross-entropy labels must be integer class indices")
    y = y.astype(np.int64)
    if np.any((y < 0) | (y >= c)):
        raise ValueError(f"cross-entropy labels must lie in 0..{c - 1}")
    shifted = s - s.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    value = logz - shifted[rows, y]
    grad = np.exp(shifted - logz[:, None])
    grad[rows, y] -= 1.0
    if single:
        return value[0], grad[0]
    return value, grad


def loss_value_grad(kind, scores, labels):
    """Per-instance loss values and their gradients w.r.t. the scores.

    Works on a single instance (scalar score / 1-D score vector) or a batch.
    """
    kind = LossKind(kind)
    if kind is LossKind.HINGE:
        return _hinge(scores, labels)
    return _cross_entropy(scores, labels)


def predict_labels(scores):
    """Sign (ties to +1) for single scores, argmax for score vectors."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim == 1 or s.shape[1] == 1:
        return np.where(s.reshape(-1) >= 0, 1, -1)
    return np.argmax(s, axis=1)


def error_rate(scores, labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    return float(np.mean(predict_labels(scores) != labels))
