import json

import numpy as np
import pytest

from cddm.dataset import Normalizer
from cddm.network import (ModelFileError, ModelNonFiniteError, ModelTruncatedError, ModelVersionError,
                          NetworkModel, hidden_outputs, load_model, rmse, save_model)
from cddm.nodegen import HiddenNode


def make_model(rng, n=2, m=4):
    nodes = [HiddenNode(rng.standard_normal(n) * 3, float(rng.standard_normal()), rng.uniform(size=n))
             for _ in range(m)]
    norm = Normalizer(np.zeros(n), np.full(n, 2.0), -1.0, 3.0)
    return NetworkModel(nodes, rng.standard_normal(m), norm, {"k": 3})


def test_predict_and_contributions(rng):
    model = make_model(rng)
    X = rng.uniform(size=(7, 2))
    H = 1 / (1 + np.exp(-(X @ np.array([nd.weights for nd in model.nodes]).T
                          + np.array([nd.bias for nd in model.nodes]))))
    assert np.allclose(model.hidden(X), H, atol=1e-15)
    assert np.allclose(model.predict(X), H @ model.beta, atol=1e-14)
    assert np.allclose(model.contributions(X).sum(axis=1), model.predict(X), atol=1e-14)
    single = model.predict(X[0])
    assert isinstance(single, float) and single == pytest.approx(model.predict(X)[0])
    with pytest.raises(ValueError):
        model.predict(np.zeros(3))


def test_predict_original_units(rng):
    model = make_model(rng)
    X_raw = rng.uniform(0, 2, (5, 2))
    assert np.allclose(model.predict_original(X_raw), model.predict(X_raw / 2.0) * 4.0 - 1.0)


def test_roundtrip_bit_exact(tmp_path, rng):
    model = make_model(rng)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X = rng.uniform(size=(20, 2))
    assert np.array_equal(back.predict(X), model.predict(X))
    assert np.array_equal(back.beta, model.beta)
    assert back.normalizer == model.normalizer
    assert back.metadata == {"k": 3}


def test_load_errors(tmp_path, rng):
    model = make_model(rng)
    p = tmp_path / "m.json"
    save_model(model, p)
    d = json.loads(p.read_text())

    def dump(obj):
        p.write_text(json.dumps(obj))
        return p

    with pytest.raises(ModelVersionError):
        load_model(dump({**d, "schema_version": 99}))
    with pytest.raises(ModelTruncatedError):
        load_model(dump({**d, "beta": d["beta"][:-1]}))
    p.write_text(json.dumps(d)[:-40])
    with pytest.raises(ModelTruncatedError):
        load_model(p)
    bad = json.loads(json.dumps(d))
    bad["nodes"][0]["b"] = float("nan")
    p.write_text(json.dumps(bad))
    with pytest.raises(ModelNonFiniteError):
        load_model(p)
    with pytest.raises(ModelFileError):
        load_model(dump({"hello": 1}))


def test_model_is_immutable(rng):
    model = make_model(rng)
    with pytest.raises(ValueError):
        model.beta[0] = 1.0
    with pytest.raises(ValueError):
        NetworkModel(model.nodes, model.beta[:2], model.normalizer)


def test_rmse_and_hidden_checks():
    assert rmse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rmse([], [])
    assert hidden_outputs([], np.zeros((3, 2))).shape == (3, 0)
    with pytest.raises(ValueError):
        hidden_outputs([HiddenNode(np.zeros(3), 0.0, np.zeros(3))], np.zeros((2, 2)))
