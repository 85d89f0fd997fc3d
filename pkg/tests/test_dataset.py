import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cddm.dataset import (Dataset, KeelParseError, Normalizer, fit_normalizer, generate_tf1, generate_tf2,
                          load_keel, read_csv, split, tf1, tf2, to_csv)

KEEL = """@relation toy
@attribute a real [0, 10]
@attribute b integer [1, 3]
@attribute target real [0, 1]
@inputs a, b
@outputs target
@data
1.5, 1, 0.25
% a comment
2.0, 3, 0.75

4.0, 2, 0.5
"""


def write(tmp_path, text, name="toy.dat"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_keel_basic(tmp_path):
    ds = load_keel(write(tmp_path, KEEL))
    assert ds.name == "toy"
    assert ds.X.shape == (3, 2)
    assert np.array_equal(ds.X[:, 0], [1.5, 2.0, 4.0])
    assert np.array_equal(ds.y, [0.25, 0.75, 0.5])


@pytest.mark.parametrize("text, fragment", [
    (KEEL.replace("2.0, 3, 0.75", "2.0, 3"), ":10: row 2 has 2 cells"),
    (KEEL.replace("4.0, 2, 0.5", "4.0, x, 0.5"), "column 2 (b)"),
    (KEEL.split("@data")[0] + "@data\n", "empty data section"),
    (KEEL.split("@data")[0], "no @data"),
    (KEEL.replace("@attribute b integer [1, 3]", "@attribute b {u, v}"), "categorical"),
    ("garbage\n" + KEEL, ":1: expected a header line"),
])
def test_load_keel_errors(tmp_path, text, fragment):
    with pytest.raises(KeelParseError, match=fragment.replace("(", r"\(").replace(")", r"\)")):
        load_keel(write(tmp_path, text))


def test_normalizer_train_only_and_unclipped():
    tr = Dataset([[0.0], [2.0], [4.0]], [10.0, 20.0, 30.0])
    te = Dataset([[5.0], [-1.0]], [40.0, 0.0])
    norm = fit_normalizer(tr)
    a, b = norm.apply(tr), norm.apply(te)
    assert np.array_equal(a.X[:, 0], [0.0, 0.5, 1.0])
    assert np.array_equal(b.X[:, 0], [1.25, -0.25])
    assert np.array_equal(b.y, [1.5, -0.5])
    back = norm.invert(b)
    assert np.allclose(back.X, te.X) and np.allclose(back.y, te.y)
    assert Normalizer.from_dict(norm.to_dict()) == norm


def test_normalizer_constant_column():
    norm = fit_normalizer(Dataset([[1.0, 3.0], [2.0, 3.0]], [0.0, 1.0]))
    assert np.array_equal(norm.transform_X([[1.5, 3.0]]), [[0.5, 0.0]])


@settings(max_examples=50, deadline=None)
@given(N=st.integers(2, 300), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**31))
def test_split_partition(N, frac, seed):
    ds = Dataset(np.arange(N, dtype=float)[:, None], np.arange(N, dtype=float))
    n_train = int(np.floor(frac * N + 0.5))
    if n_train < 1 or n_train > N - 1:
        with pytest.raises(ValueError):
            split(ds, frac, seed)
        return
    tr, te = split(ds, frac, seed)
    assert tr.N == n_train and tr.N + te.N == N
    joined = np.concatenate([tr.y, te.y])
    assert np.array_equal(np.sort(joined), ds.y)
    assert np.all(np.diff(tr.y) > 0) and np.all(np.diff(te.y) > 0)
    tr2, _ = split(ds, frac, seed)
    assert np.array_equal(tr.y, tr2.y)


def test_split_rounding_half_up():
    ds = Dataset(np.zeros((10, 1)), np.zeros(10))
    tr, te = split(ds, 0.75, 0)  # 7.5 -> 8
    assert (tr.N, te.N) == (8, 2)


def test_generate_tf1():
    tr, te = generate_tf1(seed=3)
    assert (tr.N, te.N) == (1000, 300)
    assert np.array_equal(te.X[:, 0], np.linspace(0, 1, 300))
    assert np.array_equal(tr.y, tf1(tr.X[:, 0]))
    assert tr.X.min() >= 0 and tr.X.max() <= 1
    tr2, _ = generate_tf1(seed=3)
    assert np.array_equal(tr.X, tr2.X)


def test_generate_tf2_noise_bounds():
    tr, te = generate_tf2(2000, 1500, 0.2, seed=5)
    clean_tr, clean_te = tf2(tr.X), tf2(te.X)
    lo = min(clean_tr.min(), clean_te.min())
    hi = max(clean_tr.max(), clean_te.max())
    noise = tr.y - (clean_tr - lo) / (hi - lo)
    assert np.all(np.abs(noise) <= 0.2)
    assert abs(noise.mean()) < 0.02
    assert noise.std() == pytest.approx(0.4 / np.sqrt(12), rel=0.1)
    tr0, _ = generate_tf2(200, 200, 0.0, seed=1)
    assert tr0.y.min() >= 0 and tr0.y.max() <= 1


def test_dataset_readonly_and_subset():
    ds = Dataset(np.arange(6.0).reshape(3, 2), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5
    sub = ds.subset([2, 0])
    assert np.array_equal(sub.y, [3.0, 1.0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.zeros(2))


def test_csv_roundtrip(tmp_path, rng):
    ds = Dataset(rng.standard_normal((5, 3)), rng.standard_normal(5))
    to_csv(ds, tmp_path / "d.csv")
    back = read_csv(tmp_path / "d.csv")
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
