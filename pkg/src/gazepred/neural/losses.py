"""Training losses. Each returns ``(loss, grad_wrt_first_argument)``."""
from __future__ import annotations

import numpy as np

from ..errors import DataError, ShapeError
from .layers import Module, softmax

EUCLID_EPS = 1e-12
INVALID_CLASS = 3


def euclidean_loss(pred, target, eps: float = EUCLID_EPS):
    """Mean over batch and steps of the stabilized 2-D Euclidean distance."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or pred.shape[-1] != 2:
        raise ShapeError(f"euclidean loss: pred shape {pred.shape} vs target shape {target.shape}")
    diff = pred - target
    dist = np.sqrt((diff * diff).sum(axis=-1) + eps * eps)
    n = dist.size
    loss = dist.sum() / n
    grad = diff / dist[..., None] / n
    return float(loss), grad


def cross_entropy_loss(logits, labels, ignore_class: int | None = INVALID_CLASS):
    """Mean softmax cross-entropy over unmasked steps.

    Steps whose label equals ``ignore_class`` are left out of the mean; if every
    step is masked the loss is 0 with a zero gradient.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.shape[:-1] != labels.shape:
        raise ShapeError(f"cross entropy: logits shape {logits.shape} vs labels shape {labels.shape}")
    n_classes = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"label out of range [0, {n_classes}): min {labels.min()}, max {labels.max()}")
    mask = np.ones(labels.shape, dtype=bool) if ignore_class is None else labels != ignore_class
    n = int(mask.sum())
    if n == 0:
        return 0.0, np.zeros_like(logits)
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, labels[..., None].astype(np.intp), axis=-1)[..., 0]
    loss = -(picked * mask).sum() / n
    grad = softmax(logits, axis=-1)
    np.put_along_axis(grad, labels[..., None].astype(np.intp),
                      np.take_along_axis(grad, labels[..., None].astype(np.intp), axis=-1) - 1.0,
                      axis=-1)
    grad *= mask[..., None] / n
    return float(loss), grad


class EuclideanLoss(Module):
    """Module adapter so the loss can go through ``check_gradients``."""

    def forward(self, pred, target):
        loss, self._g = euclidean_loss(pred, target)
        return np.asarray(loss)

    def backward(self, dloss):
        g = self._g * dloss
        return g, -g


class CrossEntropyLoss(Module):
    def __init__(self, labels, ignore_class: int | None = INVALID_CLASS):
        self.labels = np.asarray(labels)
        self.ignore_class = ignore_class

    def forward(self, logits):
        loss, self._g = cross_entropy_loss(logits, self.labels, self.ignore_class)
        return np.asarray(loss)

    def backward(self, dloss):
        return self._g * dloss
