import numpy as np
import pytest

from cddm.dataset import Dataset, generate_tf1
from cddm.modelselect import cross_validate, make_plan, select_cell


def test_plan_partition():
    plan = make_plan(103, n_folds=10, seed=1)
    sizes = np.bincount(plan.folds)
    assert sizes.size == 10 and sizes.max() - sizes.min() <= 1
    seen = np.concatenate([plan.fold_indices(f)[1] for f in range(10)])
    assert np.array_equal(np.sort(seen), np.arange(103))
    assert np.array_equal(make_plan(103, seed=1).folds, plan.folds)
    with pytest.raises(ValueError):
        make_plan(5, n_folds=10)
    with pytest.raises(ValueError):
        make_plan(50, k_primes=())


def small():
    tr, _ = generate_tf1(150, 10, seed=0)
    return tr


def test_single_cell_grid():
    res = cross_validate(small(), make_plan(150, (4,), (10,), n_folds=5, seed=0), "cddm")
    assert (res.best_k_prime, res.best_m) == (4, 10)
    assert len(res.rows) == 5


def test_prefix_scores_equal_separate_runs():
    """Scores read off the longest run equal scores of separately trained cells."""
    tr = small()
    big = cross_validate(tr, make_plan(150, (4,), (5, 12), n_folds=3, seed=2), "ddm")
    only = cross_validate(tr, make_plan(150, (4,), (12,), n_folds=3, seed=2), "ddm")
    assert big.scores[(4, 12)] == pytest.approx(only.scores[(4, 12)], rel=1e-12)


def test_tie_break():
    assert select_cell({(8, 50): 0.1, (5, 100): 0.1, (5, 50): 0.2}) == (5, 100)
    assert select_cell({(5, 100): 0.1, (5, 50): 0.1}) == (5, 50)


def test_duplicate_cells_collapse():
    ds = Dataset(np.linspace(0, 1, 40)[:, None], np.linspace(0, 1, 40) ** 2)
    res = cross_validate(ds, make_plan(40, (3, 3, 5), (2, 1, 1), n_folds=4, seed=0), "ddm")
    assert sorted(res.scores) == [(3, 1), (3, 2), (5, 1), (5, 2)]
    assert len(res.rows) == 4 * 4
    assert (res.best_k_prime, res.best_m) == select_cell(res.scores)


def test_infeasible_k_skipped():
    tr = small()
    with pytest.warns(UserWarning, match="infeasible"):
        res = cross_validate(tr, make_plan(150, (4, 500), (5,), n_folds=3, seed=0), "ddm")
    assert res.best_k_prime == 4
    with pytest.warns(UserWarning), pytest.raises(ValueError):
        cross_validate(tr, make_plan(150, (500,), (5,), n_folds=3, seed=0), "ddm")


def test_csv_reproducible(tmp_path):
    tr = small()
    plan = make_plan(150, (3, 5), (5, 10), n_folds=3, seed=7)
    cross_validate(tr, plan, "cddm").to_csv(tmp_path / "a.csv")
    cross_validate(tr, plan, "cddm").to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "k_prime,m,fold,rmse"
