"""Multinomial logistic regression on flat parameter vectors.

A model is a flat float64 vector of length (dims + 1) * num_classes, viewed
as a (num_classes, dims + 1) matrix whose last column is the bias.
"""

from __future__ import annotations

import numpy as np


def param_dim(dims: int, num_classes: int) -> int:
    return (dims + 1) * num_classes


def init_params(dims: int, num_classes: int) -> np.ndarray:
    return np.zeros(param_dim(dims, num_classes))


def _augment(features: np.ndarray) -> np.ndarray:
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(params: np.ndarray, features: np.ndarray, labels: np.ndarray,
         num_classes: int) -> float:
    """Mean negative log-likelihood."""
    W = params.reshape(num_classes, -1)
    logp = _log_softmax(_augment(features) @ W.T)
    return float(-logp[np.arange(len(labels)), labels].mean())


def gradient(params: np.ndarray, features: np.ndarray, labels: np.ndarray,
             num_classes: int) -> np.ndarray:
    """Flat gradient of ``loss`` at ``params``."""
    W = params.reshape(num_classes, -1)
    X = _augment(features)
    probs = np.exp(_log_softmax(X @ W.T))
    probs[np.arange(len(labels)), labels] -= 1.0
    return (probs.T @ X).ravel() / len(labels)


def predict(params: np.ndarray, features: np.ndarray, num_classes: int) -> np.ndarray:
    W = params.reshape(num_classes, -1)
    return np.argmax(_augment(features) @ W.T, axis=1)


def accuracy(params: np.ndarray, features: np.ndarray, labels: np.ndarray,
             num_classes: int) -> float:
    return float((predict(params, features, num_classes) == labels).mean())


def smoothness_bound(features: np.ndarray) -> float:
    """Smoothness constant of the per-sample loss: max ||(x, 1)||^2 / 4."""
    norms_sq = (features ** 2).sum(axis=1) + 1.0
    return float(norms_sq.max()) / 4.0
