"""Repeated seeded trials and their aggregation into convergence statistics."""

from __future__ import annotations

import functools
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import dataset as ds_mod
from .dataset import Dataset
from .trainer import PartialResultError, TrainConfig, TrialRecord, train

__all__ = [
    "ExperimentSetup",
    "TrialOutcome",
    "TrialsSummary",
    "prepare_data",
    "trial_seeds",
    "run_trials",
    "curve_stats",
    "nodes_to_reach",
    "worker_count",
]

log = logging.getLogger(__name__)

SYNTHETIC = ("tf1", "tf2")


@dataclass(frozen=True)
class ExperimentSetup:
    """Everything needed to run one trial of one method on one dataset.

    ``dataset`` is ``"tf1"``, ``"tf2"`` or a path to a KEEL ``.dat`` file.
    """

    dataset: str
    mode: str
    m: int
    k_prime: int
    theta0: float = -0.01
    Q: int = 50
    train_fraction: float = 0.75
    resplit: bool = True
    noise: float = 0.2
    n_train: int | None = None
    n_test: int | None = None
    max_candidates: int | None = None
    naive_pinv: bool = False
    allow_small_k: bool = False
    reset_q_on_halving: bool = True

    def train_config(self, seed) -> TrainConfig:
        return TrainConfig.from_k_prime(
            self.m, self.k_prime, theta0=self.theta0, Q=self.Q, seed=seed, mode=self.mode,
            max_candidates=self.max_candidates, naive_pinv=self.naive_pinv,
            allow_small_k=self.allow_small_k, reset_q_on_halving=self.reset_q_on_halving)


@functools.lru_cache(maxsize=8)
def _load_raw(path: str) -> Dataset:
    return ds_mod.load_keel(path)


def prepare_data(setup: ExperimentSetup, data_seed) -> tuple[Dataset, Dataset]:
    """Build the (train, test) pair for one trial.

    Synthetic sets are generated from ``data_seed``. KEEL files are split with
    ``data_seed`` and normalized with bounds fitted on the training part.
    """
    if setup.dataset == "tf1":
        return ds_mod.generate_tf1(setup.n_train or 1000, setup.n_test or 300, seed=data_seed)
    if setup.dataset == "tf2":
        return ds_mod.generate_tf2(setup.n_train or 5000, setup.n_test or 5000, setup.noise, seed=data_seed)
    raw = _load_raw(os.fspath(setup.dataset))
    tr, te = ds_mod.split(raw, setup.train_fraction, seed=data_seed)
    norm = ds_mod.fit_normalizer(tr)
    return norm.apply(tr), norm.apply(te)


def trial_seeds(master_seed: int, trials: int) -> list[tuple[int, int]]:
    """Deterministic ``(data_seed, train_seed)`` per trial."""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [tuple(int(v) for v in c.generate_state(2, dtype=np.uint32)) for c in children]


@dataclass
class TrialOutcome:
    trial: int
    data_seed: int
    train_seed: int
    record: TrialRecord | None = None
    error: str | None = None


def _run_one(setup: ExperimentSetup, trial: int, data_seed: int, train_seed: int) -> TrialOutcome:
    out = TrialOutcome(trial, data_seed, train_seed)
    try:
        tr, te = prepare_data(setup, data_seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, out.record = train(tr, setup.train_config(train_seed), te)
    except PartialResultError as exc:
        out.record = exc.record
        out.error = f"partial: {exc}"
    except Exception as exc:  # recorded per trial, aggregation continues
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("CDDM_THREADS")
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


@dataclass
class TrialsSummary:
    setup: ExperimentSetup
    master_seed: int
    outcomes: list[TrialOutcome] = field(default_factory=list)

    @property
    def records(self) -> list[TrialRecord]:
        """Records of trials that built their full network."""
        return [o.record for o in self.outcomes if o.record is not None and o.error is None]

    @property
    def failures(self) -> list[TrialOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def final_test_rmse(self) -> np.ndarray:
        return np.array([r.test_rmse[-1] for r in self.records if r.test_rmse.size])

    def final_train_rmse(self) -> np.ndarray:
        return np.array([r.train_rmse[-1] for r in self.records if r.train_rmse.size])

    def curve(self, which: str = "test") -> dict:
        return curve_stats([getattr(r, f"{which}_rmse") for r in self.records])

    def table_row(self) -> dict:
        """Median and interquartile range of the final test RMSE plus node statistics."""
        final = self.final_test_rmse()
        recs = self.records
        if final.size:
            q25, med, q75 = np.percentile(final, [25, 50, 75])
        else:
            q25 = med = q75 = np.nan
        return {
            "mode": self.setup.mode,
            "trials": len(self.outcomes),
            "succeeded": len(recs),
            "median_test_rmse": float(med),
            "iqr_test_rmse": float(q75 - q25),
            "median_train_rmse": float(np.median(self.final_train_rmse())) if recs else float("nan"),
            "median_nodes": float(np.median([r.n_nodes for r in recs])) if recs else float("nan"),
            "median_candidates": float(np.median([r.n_candidates for r in recs])) if recs else float("nan"),
            "median_seconds": float(np.median([r.elapsed for r in recs])) if recs else float("nan"),
        }


def curve_stats(curves) -> dict:
    """Per-node-count percentiles over trials; shorter curves are NaN-padded."""
    curves = [np.asarray(c, dtype=np.float64) for c in curves]
    length = max((c.size for c in curves), default=0)
    M = np.full((len(curves), length), np.nan)
    for i, c in enumerate(curves):
        M[i, : c.size] = c
    out = {"node_count": np.arange(1, length + 1)}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for p in (10, 25, 50, 75, 90):
            out[f"p{p}"] = np.nanpercentile(M, p, axis=0) if len(curves) else np.zeros(0)
    out["median"] = out["p50"]
    out["count"] = np.sum(np.isfinite(M), axis=0)
    return out


def nodes_to_reach(stats: dict, level: float) -> int | None:
    """Smallest node count whose median is at or below ``level``."""
    hit = np.flatnonzero(stats["median"] <= level)
    return int(stats["node_count"][hit[0]]) if hit.size else None


def run_trials(setup: ExperimentSetup, trials: int, master_seed: int = 0,
               workers: int | None = None) -> TrialsSummary:
    """Run ``trials`` independent seeded trials, concurrently when ``workers > 1``.

    Failing trials are kept in the summary with their error message; statistics
    use the successful ones.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = trial_seeds(master_seed, trials)
    if not setup.resplit:
        seeds = [(seeds[0][0], ts) for _, ts in seeds]
    workers = min(worker_count(workers), trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, setup, t, ds_, ts) for t, (ds_, ts) in enumerate(seeds)]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_run_one(setup, t, ds_, ts) for t, (ds_, ts) in enumerate(seeds)]
    summary = TrialsSummary(setup, master_seed, outcomes)
    if summary.failures:
        warnings.warn(f"{len(summary.failures)} of {trials} trials failed; statistics use the rest")
    return summary


def with_mode(setup: ExperimentSetup, mode: str, m: int | None = None) -> ExperimentSetup:
    return replace(setup, mode=mode, m=m if m is not None else setup.m)
