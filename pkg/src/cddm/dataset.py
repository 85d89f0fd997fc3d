"""Regression data: synthetic target functions, KEEL ingestion, splitting and
min-max normalization.

Inputs are stored as an ``(N, n)`` float array and targets as a length-``N``
vector. Row order is meaningful: seeded procedures index samples by row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "Normalizer",
    "KeelParseError",
    "tf1",
    "tf2",
    "generate_tf1",
    "generate_tf2",
    "load_keel",
    "split",
    "fit_normalizer",
    "to_csv",
    "read_csv",
]


class KeelParseError(ValueError):
    """Raised for malformed KEEL ``.dat`` files."""


@dataclass(frozen=True)
class Dataset:
    """Immutable set of regression samples.

    Attributes
    ----------
    X : ndarray of shape (N, n)
    y : ndarray of shape (N,)
    name : str
    normalizer : Normalizer or None
        The normalizer that produced these values, if any.
    """

    X: np.ndarray
    y: np.ndarray
    name: str = ""
    normalizer: "Normalizer | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {X.shape} and targets {y.shape} disagree")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("a dataset needs at least one sample and one input")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.N

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], name or self.name, self.normalizer)


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-dimension min-max scaling of inputs and target into [0, 1].

    A dimension whose min equals its max maps to the constant 0.
    """

    x_min: np.ndarray
    x_max: np.ndarray
    y_min: float
    y_max: float

    def __post_init__(self):
        x_min = np.asarray(self.x_min, dtype=np.float64).reshape(-1)
        x_max = np.asarray(self.x_max, dtype=np.float64).reshape(-1)
        if x_min.shape != x_max.shape:
            raise ValueError("x_min and x_max must have equal length")
        if np.any(x_max < x_min) or self.y_max < self.y_min:
            raise ValueError("normalizer bounds need max >= min")
        object.__setattr__(self, "x_min", x_min)
        object.__setattr__(self, "x_max", x_max)
        object.__setattr__(self, "y_min", float(self.y_min))
        object.__setattr__(self, "y_max", float(self.y_max))

    def __eq__(self, other):
        if not isinstance(other, Normalizer):
            return NotImplemented
        return (np.array_equal(self.x_min, other.x_min) and np.array_equal(self.x_max, other.x_max)
                and self.y_min == other.y_min and self.y_max == other.y_max)

    __hash__ = None

    @staticmethod
    def _scale(v, lo, hi):
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (v - lo) / safe, 0.0)

    @staticmethod
    def _unscale(v, lo, hi):
        return v * (hi - lo) + lo

    def transform_X(self, X):
        return self._scale(np.asarray(X, dtype=np.float64), self.x_min, self.x_max)

    def transform_y(self, y):
        return self._scale(np.asarray(y, dtype=np.float64), self.y_min, self.y_max)

    def inverse_X(self, X):
        return self._unscale(np.asarray(X, dtype=np.float64), self.x_min, self.x_max)

    def inverse_y(self, y):
        return self._unscale(np.asarray(y, dtype=np.float64), self.y_min, self.y_max)

    def apply(self, ds: Dataset) -> Dataset:
        """Normalize ``ds``. Values outside the fitted range are not clipped."""
        if ds.n != self.x_min.size:
            raise ValueError(f"normalizer has {self.x_min.size} inputs, dataset has {ds.n}")
        return Dataset(self.transform_X(ds.X), self.transform_y(ds.y), ds.name, self)

    def invert(self, ds: Dataset) -> Dataset:
        return Dataset(self.inverse_X(ds.X), self.inverse_y(ds.y), ds.name, None)

    def to_dict(self) -> dict:
        return {
            "x_min": [float(v) for v in self.x_min],
            "x_max": [float(v) for v in self.x_max],
            "y_min": self.y_min,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["x_min"], float), np.array(d["x_max"], float), d["y_min"], d["y_max"])

    @classmethod
    def identity(cls, n: int) -> "Normalizer":
        return cls(np.zeros(n), np.ones(n), 0.0, 1.0)


def fit_normalizer(ds: Dataset) -> Normalizer:
    """Fit min-max bounds on ``ds`` (use the training split only)."""
    return Normalizer(ds.X.min(axis=0), ds.X.max(axis=0), float(ds.y.min()), float(ds.y.max()))


# ---------------------------------------------------------------------------
# Synthetic target functions
# ---------------------------------------------------------------------------

def tf1(x):
    """Sum of three Gaussian bumps on [0, 1]: one wide, two narrow spikes."""
    x = np.asarray(x, dtype=np.float64)
    return (
        0.2 * np.exp(-((10.0 * x - 4.0) ** 2))
        + 0.5 * np.exp(-((80.0 * x - 40.0) ** 2))
        + 0.3 * np.exp(-((80.0 * x - 20.0) ** 2))
    )


def tf2(X):
    """Two-variable oscillating surface ``sum_j sin(20 exp(x_j)) x_j^2``."""
    X = np.asarray(X, dtype=np.float64)
    return (np.sin(20.0 * np.exp(X[..., 0])) * X[..., 0] ** 2
            + np.sin(20.0 * np.exp(X[..., 1])) * X[..., 1] ** 2)


def _check_counts(n_train, n_test):
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")


def generate_tf1(n_train: int = 1000, n_test: int = 300, seed=None) -> tuple[Dataset, Dataset]:
    """Noise-free samples of :func:`tf1`.

    Training inputs are uniform on [0, 1]; test inputs are ``n_test``
    equidistant points including both endpoints.
    """
    _check_counts(n_train, n_test)
    rng = np.random.default_rng(seed)
    x_train = rng.uniform(0.0, 1.0, n_train)
    x_test = np.linspace(0.0, 1.0, n_test)
    return (Dataset(x_train[:, None], tf1(x_train), "tf1-train"),
            Dataset(x_test[:, None], tf1(x_test), "tf1-test"))


def generate_tf2(n_train: int = 5000, n_test: int = 5000, noise_halfwidth: float = 0.2,
                 seed=None) -> tuple[Dataset, Dataset]:
    """Noisy samples of :func:`tf2` on the unit square.

    Clean targets of both sets are min-max scaled with their joint range, then
    uniform noise on ``[-noise_halfwidth, noise_halfwidth]`` is added to both.
    """
    _check_counts(n_train, n_test)
    if noise_halfwidth < 0:
        raise ValueError("noise_halfwidth must be >= 0")
    rng = np.random.default_rng(seed)
    X_train = rng.uniform(0.0, 1.0, (n_train, 2))
    X_test = rng.uniform(0.0, 1.0, (n_test, 2))
    g_train, g_test = tf2(X_train), tf2(X_test)
    lo = min(g_train.min(), g_test.min())
    hi = max(g_train.max(), g_test.max())
    span = hi - lo if hi > lo else 1.0
    y_train = (g_train - lo) / span
    y_test = (g_test - lo) / span
    if noise_halfwidth > 0:
        y_train = y_train + rng.uniform(-noise_halfwidth, noise_halfwidth, n_train)
        y_test = y_test + rng.uniform(-noise_halfwidth, noise_halfwidth, n_test)
    return Dataset(X_train, y_train, "tf2-train"), Dataset(X_test, y_test, "tf2-test")


# ---------------------------------------------------------------------------
# KEEL .dat files
# ---------------------------------------------------------------------------

_KEEL_DIRECTIVES = ("@relation", "@attribute", "@inputs", "@input", "@outputs", "@output", "@data")


def load_keel(path) -> Dataset:
    """Read a KEEL regression file; the last ``@attribute`` is the target.

    Returns un-normalized data with rows in file order.
    """
    path = Path(path)
    attributes: list[str] = []
    rows: list[list[float]] = []
    relation = path.stem
    in_data = False
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise KeelParseError(f"{path}:{lineno}: expected a header line, got {line[:40]!r}")
                keyword = line.split(None, 1)[0].lower()
                if keyword not in _KEEL_DIRECTIVES:
                    raise KeelParseError(f"{path}:{lineno}: unknown header directive {keyword!r}")
                if keyword == "@relation":
                    parts = line.split(None, 1)
                    if len(parts) == 2:
                        relation = parts[1].strip()
                elif keyword == "@attribute":
                    parts = line.split(None, 2)
                    if len(parts) < 2:
                        raise KeelParseError(f"{path}:{lineno}: @attribute without a name")
                    if len(parts) == 3 and parts[2].lstrip().startswith("{"):
                        raise KeelParseError(f"{path}:{lineno}: categorical attribute {parts[1]!r} unsupported")
                    attributes.append(parts[1])
                elif keyword == "@data":
                    if len(attributes) < 2:
                        raise KeelParseError(f"{path}:{lineno}: need at least two @attribute lines before @data")
                    in_data = True
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(attributes):
                raise KeelParseError(
                    f"{path}:{lineno}: row {len(rows) + 1} has {len(cells)} cells, expected {len(attributes)}")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                col = next(j for j, c in enumerate(cells) if not _is_float(c))
                raise KeelParseError(
                    f"{path}:{lineno}: row {len(rows) + 1}, column {col + 1} ({attributes[col]}): "
                    f"non-numeric value {cells[col]!r}") from None
            rows.append(values)
    if not in_data:
        raise KeelParseError(f"{path}: no @data section")
    if not rows:
        raise KeelParseError(f"{path}: empty data section")
    data = np.array(rows, dtype=np.float64)
    return Dataset(data[:, :-1], data[:, -1], relation)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# Splitting and CSV
# ---------------------------------------------------------------------------

def split(ds: Dataset, train_fraction: float = 0.75, seed=None) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test partition.

    The training part has ``round_half_up(train_fraction * N)`` samples; both
    parts keep the original row order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(np.floor(train_fraction * ds.N + 0.5))
    if n_train < 1 or n_train > ds.N - 1:
        raise ValueError(f"split of {ds.N} samples at {train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(ds.N)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return ds.subset(train_idx, f"{ds.name}-train"), ds.subset(test_idx, f"{ds.name}-test")


def to_csv(ds: Dataset, path) -> None:
    """Write ``x1,...,xn,y`` CSV (debug export)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(ds.n)] + ["y"])
        for xrow, yv in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in xrow] + [repr(float(yv))])


def read_csv(path, name: str | None = None) -> Dataset:
    """Inverse of :func:`to_csv`; a file without a ``y`` column gets zero targets."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    if header[-1].strip() == "y":
        return Dataset(data[:, :-1], data[:, -1], name or Path(path).stem)
    return Dataset(data, np.zeros(data.shape[0]), name or Path(path).stem)
