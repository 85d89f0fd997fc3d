"""K-fold cross-validation over the neighbourhood size and node count."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .trainer import PartialResultError, TrainConfig, train

__all__ = [
    "DEFAULT_K_PRIMES",
    "DEFAULT_MS",
    "CVPlan",
    "CVResult",
    "make_plan",
    "cross_validate",
    "select_cell",
]

log = logging.getLogger(__name__)

DEFAULT_K_PRIMES = (5, 8, 10, 15, 20, 25, 30, 35, 40, 50)
DEFAULT_MS = (25, 50, 100, 150, 200, 250, 300, 400, 500)


@dataclass(frozen=True)
class CVPlan:
    """Fold assignment plus the (k', m) grid.

    ``folds[l]`` is the 0-based fold of training sample ``l``.
    """

    folds: np.ndarray
    k_primes: tuple
    ms: tuple
    repetitions: int = 1
    seed: int = 0

    @property
    def n_folds(self) -> int:
        return int(self.folds.max()) + 1

    def fold_indices(self, f: int) -> tuple[np.ndarray, np.ndarray]:
        """``(fit_idx, val_idx)`` for fold ``f``."""
        return np.flatnonzero(self.folds != f), np.flatnonzero(self.folds == f)


def make_plan(N: int, k_primes=DEFAULT_K_PRIMES, ms=DEFAULT_MS, n_folds: int = 10,
              repetitions: int = 1, seed: int = 0) -> CVPlan:
    """Random permutation chunked into ``n_folds`` near-equal folds."""
    if not k_primes or not ms:
        raise ValueError("empty cross-validation grid")
    if not 2 <= n_folds <= N:
        raise ValueError(f"need 2 <= n_folds <= N, got n_folds={n_folds}, N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    folds = np.empty(N, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(perm, n_folds)):
        folds[chunk] = f
    return CVPlan(folds, tuple(int(k) for k in k_primes), tuple(int(m) for m in ms), repetitions, seed)


@dataclass
class CVResult:
    best_k_prime: int
    best_m: int
    scores: dict  # (k_prime, m) -> mean validation RMSE
    rows: list = field(default_factory=list)  # (k_prime, m, fold, rmse)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k_prime", "m", "fold", "rmse"])
            for kp, m, f, r in self.rows:
                w.writerow([kp, m, f + 1, repr(float(r))])


def select_cell(scores: dict) -> tuple[int, int]:
    """Cell with the lowest score; ties go to the smaller k', then the smaller m."""
    return min(sorted(scores), key=lambda c: scores[c])


def _cell_seed(master: int, k_prime: int, fold: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, k_prime, fold, rep]).generate_state(1)[0])


def cross_validate(train_ds: Dataset, plan: CVPlan, mode: str = "ddm", theta0: float = -0.01,
                   Q: int = 50, allow_small_k: bool = True, reset_q_on_halving: bool = True) -> CVResult:
    """Mean validation RMSE for every (k', m) cell; returns the best cell.

    For each k', fold and repetition one network with ``max(ms)`` nodes is
    trained and its validation RMSE read off after each node count in the
    grid. For CD-DM the run that stops at ``m`` acceptances is exactly the
    prefix of the longer run, and for D-DM the prefix is a D-DM network on
    the first ``m`` anchors, so this matches training each cell separately.

    Ties go to the smaller k', then the smaller m.
    """
    m_max = max(plan.ms)
    ms = tuple(dict.fromkeys(plan.ms))
    fold_sizes = [int(np.sum(plan.folds != f)) for f in range(plan.n_folds)]
    per_cell: dict[tuple[int, int], list[float]] = {}
    rows = []
    for kp in dict.fromkeys(plan.k_primes):
        if kp < 2 or kp - 1 > min(fold_sizes) - 1:
            warnings.warn(f"k_prime={kp} infeasible for fold training size {min(fold_sizes)}; skipped")
            continue
        for f in range(plan.n_folds):
            fit_idx, val_idx = plan.fold_indices(f)
            fit, val = train_ds.subset(fit_idx), train_ds.subset(val_idx)
            fold_scores = {m: [] for m in ms}
            for rep in range(plan.repetitions):
                cfg = TrainConfig.from_k_prime(
                    m_max, kp, theta0=theta0, Q=Q, mode=mode, seed=_cell_seed(plan.seed, kp, f, rep),
                    allow_small_k=allow_small_k, reset_q_on_halving=reset_q_on_halving)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    try:
                        _, rec = train(fit, cfg, val)
                    except PartialResultError as exc:
                        rec = exc.record
                for m in ms:
                    fold_scores[m].append(rec.test_rmse[m - 1] if m <= rec.n_nodes else np.nan)
            for m in ms:
                score = float(np.mean(fold_scores[m]))
                rows.append((kp, m, f, score))
                per_cell.setdefault((kp, m), []).append(score)
    scores = {}
    for cell, vals in per_cell.items():
        if np.all(np.isfinite(vals)):
            scores[cell] = float(np.mean(vals))
        else:
            warnings.warn(f"cell k_prime={cell[0]}, m={cell[1]} incomplete (candidate budget); skipped")
    if not scores:
        raise ValueError("no feasible cross-validation cell")
    best = select_cell(scores)
    log.info("cross-validation picked k_prime=%d m=%d (rmse %.5g)", best[0], best[1], scores[best])
    return CVResult(best[0], best[1], scores, rows)
