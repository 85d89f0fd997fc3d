"""Training procedures.

``train_ddm`` draws ``m`` anchors and keeps every node it builds.
``train_cddm`` builds candidate nodes one at a time and keeps a candidate
only if it lowers the training RMSE by at least ``|theta|``; after ``Q``
iterations without an acceptance the threshold is halved.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, Normalizer
from .linalg import IncrementalLS, pinv
from .neighborhood import NeighborIndex
from .network import NetworkModel, model_from_dict, model_to_dict, rmse
from .nodegen import HiddenNode, fit_hyperplane, make_node, sigmoid

__all__ = [
    "TrainConfig",
    "ConstructionState",
    "TrialRecord",
    "PartialResultError",
    "SmallNeighborhoodWarning",
    "train",
    "train_ddm",
    "train_cddm",
    "ZERO_THETA_SLACK",
]

# Acceptance slack used once theta has reached (or started at) zero.
ZERO_THETA_SLACK = 1e-14
MODES = ("ddm", "cddm")


class SmallNeighborhoodWarning(UserWarning):
    """k < n: the local hyperplane fit is underdetermined."""


class PartialResultError(RuntimeError):
    """Candidate budget exhausted before ``m`` nodes were accepted.

    ``model`` and ``record`` hold what was built so far.
    """

    def __init__(self, msg, model, record):
        super().__init__(msg)
        self.model = model
        self.record = record


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one training run.

    ``k`` is the number of neighbours, so the local neighbourhood holds
    ``k_prime = k + 1`` points. ``max_candidates`` defaults to ``200 * m``.

    With ``reset_q_on_halving`` (default) the stall counter restarts after each
    halving, so every threshold level gets ``Q`` fresh candidates. With it off,
    ``q`` only resets on acceptance and a stalled run halves ``theta`` on every
    further iteration until a candidate passes.
    """

    m: int
    k: int
    theta0: float = -0.01
    Q: int = 50
    seed: int | None = 0
    max_candidates: int | None = None
    mode: str = "cddm"
    naive_pinv: bool = False
    allow_small_k: bool = False
    pinv_tol: float | None = None
    reset_q_on_halving: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1 (k_prime >= 2)")
        if not self.theta0 <= 0:
            raise ValueError("theta0 must be <= 0")
        if self.Q < 1:
            raise ValueError("Q must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_candidates is not None and self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")

    @classmethod
    def from_k_prime(cls, m, k_prime, **kw) -> "TrainConfig":
        return cls(m=m, k=k_prime - 1, **kw)

    @property
    def k_prime(self) -> int:
        return self.k + 1

    @property
    def candidate_budget(self) -> int:
        return self.max_candidates if self.max_candidates is not None else 200 * self.m

    def echo(self) -> dict:
        return {
            "mode": self.mode,
            "m": self.m,
            "k_prime": self.k_prime,
            "theta0": self.theta0,
            "Q": self.Q,
            "seed": self.seed,
            "max_candidates": self.candidate_budget,
            "naive_pinv": self.naive_pinv,
            "pinv_tol": self.pinv_tol,
            "reset_q_on_halving": self.reset_q_on_halving,
        }


@dataclass
class ConstructionState:
    accepted: int = 0
    q: int = 1
    theta: float = -0.01
    rmse_prev: float = 1.0
    candidates: int = 0


@dataclass
class TrialRecord:
    """Log of one training run.

    Per-acceptance arrays are indexed by node count minus one. The per-candidate
    trace (CD-DM only) stores the threshold in force when the candidate was
    judged, whether it was accepted, the stall counter after the decision and
    the error change.
    """

    mode: str
    config: dict
    train_rmse: np.ndarray
    test_rmse: np.ndarray
    candidates_at: np.ndarray
    theta_at: np.ndarray
    theta_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accepted_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    q_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    delta_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    anchors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    model: NetworkModel | None = None
    elapsed: float = 0.0
    complete: bool = True

    @property
    def n_nodes(self) -> int:
        return int(self.train_rmse.size)

    @property
    def n_candidates(self) -> int:
        return int(self.theta_trace.size) if self.mode == "cddm" else self.n_nodes

    def to_dict(self) -> dict:
        f = lambda a: [float(v) for v in a]
        return {
            "mode": self.mode,
            "config": self.config,
            "train_rmse": f(self.train_rmse),
            "test_rmse": f(self.test_rmse),
            "candidates_at": [int(v) for v in self.candidates_at],
            "theta_at": f(self.theta_at),
            "theta_trace": f(self.theta_trace),
            "accepted_trace": [bool(v) for v in self.accepted_trace],
            "q_trace": [int(v) for v in self.q_trace],
            "delta_trace": f(self.delta_trace),
            "anchors": [int(v) for v in self.anchors],
            "model": model_to_dict(self.model) if self.model is not None else None,
            "elapsed": self.elapsed,
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        arr = lambda k, dt=np.float64: np.array(d.get(k, []), dtype=dt)
        return cls(
            mode=d["mode"],
            config=d.get("config", {}),
            train_rmse=arr("train_rmse"),
            test_rmse=arr("test_rmse"),
            candidates_at=arr("candidates_at", np.int64),
            theta_at=arr("theta_at"),
            theta_trace=arr("theta_trace"),
            accepted_trace=arr("accepted_trace", bool),
            q_trace=arr("q_trace", np.int64),
            delta_trace=arr("delta_trace"),
            anchors=arr("anchors", np.int64),
            model=model_from_dict(d["model"]) if d.get("model") else None,
            elapsed=float(d.get("elapsed", 0.0)),
            complete=bool(d.get("complete", True)),
        )


# ---------------------------------------------------------------------------
# Node generation
# ---------------------------------------------------------------------------

class _NodeFactory:
    """Anchor index -> hidden node, memoized (a node depends only on its anchor)."""

    def __init__(self, ds: Dataset, k: int):
        self.X = ds.X
        self.y = ds.y
        self.k = k
        self.index = NeighborIndex(ds.X)
        self._cache: dict[int, HiddenNode] = {}

    def node(self, anchor: int) -> HiddenNode:
        nd = self._cache.get(anchor)
        if nd is None:
            psi = self.index.neighborhood(anchor, self.k)
            plane = fit_hyperplane(self.X[psi], self.y[psi])
            nd = make_node(plane, self.X[anchor])
            self._cache[anchor] = nd
        return nd

    @staticmethod
    def column(node: HiddenNode, X) -> np.ndarray:
        return sigmoid(X @ node.weights + node.bias)


def _check_inputs(train: Dataset, cfg: TrainConfig):
    if cfg.k > train.N - 1:
        raise ValueError(f"k_prime={cfg.k_prime} needs at least {cfg.k_prime} training samples, got {train.N}")
    if cfg.k < train.n and not cfg.allow_small_k:
        warnings.warn(
            f"k={cfg.k} neighbours < n={train.n} inputs; local planes are underdetermined "
            f"(pass allow_small_k to silence)",
            SmallNeighborhoodWarning,
            stacklevel=3,
        )


def _normalizer_of(ds: Dataset) -> Normalizer:
    return ds.normalizer if ds.normalizer is not None else Normalizer.identity(ds.n)


class _TestTracker:
    """Test-set RMSE after each accepted node, from incrementally built columns."""

    def __init__(self, test: Dataset | None, capacity: int):
        self.test = test
        if test is not None:
            self.H = np.empty((test.N, capacity))
        self.values: list[float] = []

    def add(self, node: HiddenNode, beta: np.ndarray):
        if self.test is None:
            self.values.append(np.nan)
            return
        j = beta.size - 1
        self.H[:, j] = _NodeFactory.column(node, self.test.X)
        self.values.append(rmse(self.H[:, : j + 1] @ beta, self.test.y))


class _NaiveSolver:
    """Literal per-candidate pseudoinverse solve of the output weights."""

    def __init__(self, y, tol=None):
        self.y = np.asarray(y, dtype=np.float64)
        self.tol = tol
        self.cols: list[np.ndarray] = []

    def append(self, col):
        return _NaiveCandidate(self, col)

    @property
    def H(self):
        return np.column_stack(self.cols)

    def beta(self):
        if not self.cols:
            return np.zeros(0)
        return pinv(self.H, self.tol) @ self.y

    basic_beta = beta


class _NaiveCandidate:
    def __init__(self, owner, col):
        self.owner = owner
        self.col = col
        H = np.column_stack(owner.cols + [col])
        self.beta = pinv(H, owner.tol) @ owner.y
        fitted = H @ self.beta
        self.rmse = float(np.sqrt(np.mean((fitted - owner.y) ** 2)))

    def commit(self):
        self.owner.cols.append(self.col)

    def discard(self):
        pass


def _accepts(delta: float, theta: float) -> bool:
    if theta == 0.0:
        return delta <= ZERO_THETA_SLACK
    return delta <= theta


# ---------------------------------------------------------------------------
# Public training entry points
# ---------------------------------------------------------------------------

def train(train_ds: Dataset, cfg: TrainConfig, test: Dataset | None = None):
    """Dispatch on ``cfg.mode``; returns ``(model, record)``."""
    if cfg.mode == "ddm":
        return train_ddm(train_ds, cfg, test)
    return train_cddm(train_ds, cfg, test)


def train_ddm(train: Dataset, cfg: TrainConfig, test: Dataset | None = None):
    """Non-constructive baseline: ``m`` nodes from random anchors, one solve.

    The record holds train/test RMSE for every node-count prefix.
    """
    _check_inputs(train, cfg)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    factory = _NodeFactory(train, cfg.k)
    ils = IncrementalLS(train.y, capacity=cfg.m, tol=cfg.pinv_tol)
    tracker = _TestTracker(test, cfg.m)
    nodes, anchors, train_curve = [], [], []
    for _ in range(cfg.m):
        anchor = int(rng.integers(train.N))
        node = factory.node(anchor)
        ils.append(factory.column(node, train.X)).commit()
        nodes.append(node)
        anchors.append(anchor)
        train_curve.append(ils.rmse)
        if test is not None:
            tracker.add(node, ils.basic_beta())
        else:
            tracker.values.append(np.nan)
    beta = _output_weights(ils.H, train.y, cfg.pinv_tol)
    meta = cfg.echo() | {"pinv_tol_effective": _tol_echo(cfg, train.N, cfg.m)}
    model = NetworkModel(nodes, beta, _normalizer_of(train), meta)
    # the prefix curve uses back-substitution weights; the last point reports the final model
    train_curve[-1] = rmse(model.predict(train.X), train.y)
    if test is not None:
        tracker.values[-1] = rmse(model.predict(test.X), test.y)
    m = cfg.m
    record = TrialRecord(
        mode="ddm",
        config=cfg.echo(),
        train_rmse=np.array(train_curve),
        test_rmse=np.array(tracker.values),
        candidates_at=np.arange(1, m + 1),
        theta_at=np.full(m, np.nan),
        anchors=np.array(anchors, dtype=np.int64),
        model=model,
        elapsed=time.perf_counter() - t0,
    )
    return model, record


def _output_weights(H, y, tol):
    """Final ``beta = pinv(H) @ y``, solved from scratch on the accepted columns."""
    return pinv(np.ascontiguousarray(H), tol) @ y


def _tol_echo(cfg, rows, cols):
    from .linalg import default_tol

    return cfg.pinv_tol if cfg.pinv_tol is not None else default_tol((rows, cols))


def train_cddm(train: Dataset, cfg: TrainConfig, test: Dataset | None = None):
    """Constructive training loop.

    Each iteration draws an anchor uniformly (with replacement), builds its
    node, and re-solves the output weights with the candidate column added.
    The candidate is kept iff ``RMSE_i - RMSE_{i-1} <= theta``; the stall
    counter ``q`` is incremented every iteration and reset to 1 on acceptance;
    an iteration ending with ``q >= Q`` halves ``theta`` (and restarts ``q``
    unless ``cfg.reset_q_on_halving`` is off). ``RMSE_0`` is 1.

    Raises :class:`PartialResultError` when ``cfg.candidate_budget``
    candidates were tried before ``m`` acceptances.
    """
    _check_inputs(train, cfg)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    factory = _NodeFactory(train, cfg.k)
    if cfg.naive_pinv:
        solver = _NaiveSolver(train.y, cfg.pinv_tol)
    else:
        solver = IncrementalLS(train.y, capacity=cfg.m, tol=cfg.pinv_tol, truncate=True)
    tracker = _TestTracker(test, cfg.m)
    state = ConstructionState(theta=float(cfg.theta0))
    budget = cfg.candidate_budget

    nodes, anchors = [], []
    train_curve, cand_at, theta_at = [], [], []
    theta_trace, acc_trace, q_trace, delta_trace = [], [], [], []

    while state.accepted < cfg.m and state.candidates < budget:
        anchor = int(rng.integers(train.N))
        node = factory.node(anchor)
        cand = solver.append(factory.column(node, train.X))
        rmse_i = float(cand.rmse)
        delta = rmse_i - state.rmse_prev
        state.q += 1
        state.candidates += 1
        theta = state.theta
        accepted = _accepts(delta, theta)
        if accepted:
            cand.commit()
            state.accepted += 1
            state.q = 1
            state.rmse_prev = rmse_i
            nodes.append(node)
            anchors.append(anchor)
            train_curve.append(rmse_i)
            cand_at.append(state.candidates)
            theta_at.append(theta)
            if test is not None:
                tracker.add(node, solver.beta())
            else:
                tracker.values.append(np.nan)
        else:
            cand.discard()
        theta_trace.append(theta)
        acc_trace.append(accepted)
        q_trace.append(state.q)
        delta_trace.append(delta)
        if state.q >= cfg.Q:
            state.theta = state.theta / 2.0
            if cfg.reset_q_on_halving:
                state.q = 1

    beta = _output_weights(solver.H, train.y, cfg.pinv_tol) if nodes else np.zeros(0)
    meta = cfg.echo() | {"pinv_tol_effective": _tol_echo(cfg, train.N, max(len(nodes), 1))}
    model = NetworkModel(nodes, beta, _normalizer_of(train), meta)
    record = TrialRecord(
        mode="cddm",
        config=cfg.echo(),
        train_rmse=np.array(train_curve),
        test_rmse=np.array(tracker.values),
        candidates_at=np.array(cand_at, dtype=np.int64),
        theta_at=np.array(theta_at),
        theta_trace=np.array(theta_trace),
        accepted_trace=np.array(acc_trace, dtype=bool),
        q_trace=np.array(q_trace, dtype=np.int64),
        delta_trace=np.array(delta_trace),
        anchors=np.array(anchors, dtype=np.int64),
        model=model,
        elapsed=time.perf_counter() - t0,
        complete=state.accepted >= cfg.m,
    )
    if not record.complete:
        raise PartialResultError(
            f"accepted {state.accepted} of {cfg.m} nodes within {budget} candidates", model, record)
    return model, record
