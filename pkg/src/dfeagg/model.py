"""Multinomial logistic regression, the convex stand-in for the client model.

Weights are a ``(classes, features + 1)`` matrix (bias in the last column)
stored flattened so it can be quantized and encrypted as one vector.
"""

from __future__ import annotations

import numpy as np

from .errors import TrainingDivergedError


def dimension(n_features: int, n_classes: int) -> int:
    return n_classes * (n_features + 1)


def unflatten(w: np.ndarray, n_classes: int) -> np.ndarray:
    return np.asarray(w, dtype=np.float64).reshape(n_classes, -1)


def augment(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.hstack([x, np.ones((x.shape[0], 1))])


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the flat weights."""
    W = unflatten(w, n_classes)
    xa = augment(x)
    probs = softmax(xa @ W.T)
    m = xa.shape[0]
    idx = np.arange(m)
    loss = -float(np.mean(np.log(np.clip(probs[idx, y], 1e-300, None))))
    probs[idx, y] -= 1.0
    grad = probs.T @ xa / m
    return loss, grad.ravel()


def predict(w: np.ndarray, x: np.ndarray, n_classes: int) -> np.ndarray:
    return np.argmax(augment(x) @ unflatten(w, n_classes).T, axis=1)


def init_weights(n_features: int, n_classes: int, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
    return rng.normal(0.0, scale, size=dimension(n_features, n_classes))


def sgd(w: np.ndarray, x: np.ndarray, y: np.ndarray, n_classes: int, *, lr: float, epochs: int,
        batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Mini-batch SGD; raises if the loss stops being finite."""
    w = np.array(w, dtype=np.float64, copy=True)
    m = len(y)
    if m == 0:
        raise ValueError("empty dataset")
    if lr == 0:
        return w
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            batch = order[start:start + batch_size]
            loss, grad = loss_and_grad(w, x[batch], y[batch], n_classes)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(f"non-finite loss at lr={lr}")
            w -= lr * grad
    return w
