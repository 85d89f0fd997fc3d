"""Data-driven hidden-node generation.

A local hyperplane fitted around an anchor sample gives the slopes of the
target there; a logistic sigmoid tangent to that hyperplane at the anchor has
weights ``4 * slopes`` and its inflection point on the anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import lstsq

__all__ = ["Hyperplane", "HiddenNode", "fit_hyperplane", "make_node", "sigmoid", "sigmoid_response"]

# exp(700) is finite; beyond it the logistic is saturated to working precision anyway.
_Z_CLIP = 700.0


@dataclass(frozen=True)
class Hyperplane:
    slopes: np.ndarray
    intercept: float

    def __call__(self, X):
        return np.asarray(X, dtype=np.float64) @ self.slopes + self.intercept


@dataclass(frozen=True)
class HiddenNode:
    """Sigmoid ``1 / (1 + exp(-(a.x + b)))`` with the anchor that produced it."""

    weights: np.ndarray
    bias: float
    anchor: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def fit_hyperplane(X, y) -> Hyperplane:
    """Least-squares plane ``y ~ slopes.x + intercept`` through the given points.

    The fit is done on centred data, so a rank-deficient neighbourhood yields
    the minimum-norm slope vector (all-coincident inputs give zero slopes and
    the mean target as intercept).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of points")
    if X.shape[0] < 2:
        raise ValueError("need at least two points to fit a hyperplane")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite data in neighbourhood")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    slopes = lstsq(X - x_mean, y - y_mean)
    return Hyperplane(slopes, float(y_mean - slopes @ x_mean))


def make_node(plane: Hyperplane, anchor) -> HiddenNode:
    """Sigmoid tangent to ``plane`` at ``anchor``."""
    anchor = np.asarray(anchor, dtype=np.float64).reshape(-1)
    if anchor.shape != plane.slopes.shape:
        raise ValueError(f"anchor has dimension {anchor.size}, plane has {plane.slopes.size}")
    a = 4.0 * plane.slopes
    return HiddenNode(a, float(-(a @ anchor)), anchor)


def sigmoid(z):
    """Overflow-safe logistic function, elementwise."""
    z = np.clip(np.asarray(z, dtype=np.float64), -_Z_CLIP, _Z_CLIP)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_response(node: HiddenNode, x):
    """Node output for one input vector, or for each row of a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != node.n:
        raise ValueError(f"input dimension {x.shape[-1]} != node dimension {node.n}")
    out = sigmoid(x @ node.weights + node.bias)
    return float(out) if out.ndim == 0 else out
