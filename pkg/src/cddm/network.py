"""Trained network: hidden sigmoid layer plus a linear output, and its file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Normalizer
from .nodegen import HiddenNode, sigmoid

__all__ = [
    "NetworkModel",
    "hidden_outputs",
    "rmse",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "ModelFileError",
    "ModelVersionError",
    "ModelTruncatedError",
    "ModelNonFiniteError",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


def _stack(nodes, n=None):
    if not nodes:
        return np.zeros((0, n or 0)), np.zeros(0)
    A = np.vstack([nd.weights for nd in nodes])
    b = np.array([nd.bias for nd in nodes], dtype=np.float64)
    return A, b


def hidden_outputs(nodes, X) -> np.ndarray:
    """``(N, m)`` matrix of node responses; column ``j`` belongs to ``nodes[j]``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    for nd in nodes:
        if nd.n != X.shape[1]:
            raise ValueError(f"node dimension {nd.n} != data dimension {X.shape[1]}")
    if not nodes:
        return np.zeros((X.shape[0], 0))
    A, b = _stack(nodes)
    return sigmoid(X @ A.T + b)


def rmse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} targets")
    if p.size == 0:
        raise ValueError("rmse of empty vectors")
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass(frozen=True)
class NetworkModel:
    """Immutable trained network.

    Predictions are in normalized target units; ``normalizer`` maps back.
    """

    nodes: tuple
    beta: np.ndarray
    normalizer: Normalizer
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        if beta.size != len(nodes):
            raise ValueError(f"{len(nodes)} nodes but {beta.size} output weights")
        beta.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def n(self) -> int:
        return self.normalizer.x_min.size

    def hidden(self, X) -> np.ndarray:
        return hidden_outputs(self.nodes, X)

    def predict(self, X):
        """Network output for one input vector (float) or rows of a matrix."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if X.shape[-1] != self.n:
            raise ValueError(f"input dimension {X.shape[-1]} != model dimension {self.n}")
        out = self.hidden(X) @ self.beta
        return float(out[0]) if single else out

    def contributions(self, X) -> np.ndarray:
        """Per-node terms ``beta_j * h_j(x)``; rows sum to :meth:`predict`."""
        return self.hidden(X) * self.beta

    def predict_original(self, X_raw):
        """Predict from raw inputs and return raw-unit targets."""
        X = self.normalizer.transform_X(X_raw)
        return self.normalizer.inverse_y(self.predict(X))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

class ModelFileError(ValueError):
    """Base class for unreadable model files."""


class ModelVersionError(ModelFileError):
    pass


class ModelTruncatedError(ModelFileError):
    pass


class ModelNonFiniteError(ModelFileError):
    pass


def _floats(v):
    return [float(x) for x in np.asarray(v, dtype=np.float64).reshape(-1)]


def model_to_dict(model: NetworkModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "cddm-network",
        "n": model.n,
        "m": model.m,
        "nodes": [
            {"a": _floats(nd.weights), "b": float(nd.bias), "anchor": _floats(nd.anchor)}
            for nd in model.nodes
        ],
        "beta": _floats(model.beta),
        "normalizer": model.normalizer.to_dict(),
        "metadata": model.metadata,
    }


def _check_finite(obj, where="model"):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ModelNonFiniteError(f"non-finite value in {where}")
    elif isinstance(obj, list):
        for v in obj:
            _check_finite(v, where)
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")


def model_from_dict(d: dict) -> NetworkModel:
    if not isinstance(d, dict) or "schema_version" not in d:
        raise ModelFileError("not a model file (no schema_version)")
    if d["schema_version"] != SCHEMA_VERSION:
        raise ModelVersionError(f"unsupported schema_version {d['schema_version']!r} (expected {SCHEMA_VERSION})")
    try:
        n, m = int(d["n"]), int(d["m"])
        _check_finite(d["nodes"], "nodes")
        _check_finite(d["beta"], "beta")
        _check_finite(d["normalizer"], "normalizer")
        nodes = tuple(
            HiddenNode(np.array(nd["a"], dtype=np.float64), float(nd["b"]),
                       np.array(nd.get("anchor", [0.0] * n), dtype=np.float64))
            for nd in d["nodes"]
        )
        beta = np.array(d["beta"], dtype=np.float64)
        normalizer = Normalizer.from_dict(d["normalizer"])
    except KeyError as exc:
        raise ModelTruncatedError(f"model file missing field {exc}") from None
    if len(nodes) != m or beta.size != m:
        raise ModelTruncatedError(f"expected {m} nodes, found {len(nodes)} nodes and {beta.size} weights")
    if any(nd.weights.size != n for nd in nodes) or normalizer.x_min.size != n:
        raise ModelFileError(f"inconsistent input dimension (expected {n})")
    return NetworkModel(nodes, beta, normalizer, d.get("metadata", {}))


def save_model(model: NetworkModel, path) -> None:
    """Write a JSON model file. Floats use shortest round-trip repr, so
    :func:`load_model` reproduces the model bit for bit."""
    text = json.dumps(model_to_dict(model), indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> NetworkModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text, parse_constant=lambda c: float(c))
    except json.JSONDecodeError as exc:
        raise ModelTruncatedError(f"{path}: unreadable model file ({exc})") from None
    return model_from_dict(d)
