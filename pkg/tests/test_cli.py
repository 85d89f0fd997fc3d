import csv
import json

import numpy as np
import pytest

from cddm.cli import main, parse_config, ConfigError
from cddm.dataset import tf1


def body(path):
    """CSV content without the timestamp line."""
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("# generated")]


def rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture
def keel200(tmp_path):
    r = np.random.default_rng(0)
    X = r.uniform(size=(200, 2))
    y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2
    lines = ["@relation toy", "@attribute a real", "@attribute b real", "@attribute t real", "@data"]
    lines += [f"{float(a)!r}, {float(b)!r}, {float(t)!r}" for (a, b), t in zip(X, y)]
    p = tmp_path / "toy.dat"
    p.write_text("\n".join(lines) + "\n")
    return p


def write_cfg(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


RUN_CFG = """# tiny tf1 run
dataset = tf1
mode = both
m_ddm = 30
m_cddm = 15
k_prime = 3
trials = 2
n_train = 300
n_test = 100
master_seed = 5
output_dir = out
workers = 1
"""


def test_run_outputs_and_rerun_identical(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG)
    assert main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    first = {p: body(p) for p in out.rglob("*.csv")}
    assert set(p.name for p in first) == {"convergence.csv", "theta.csv"}
    conv = rows(out / "cddm" / "convergence.csv")
    assert list(conv[0]) == ["node_count", "train_median", "train_p10", "train_p90",
                             "test_median", "test_p10", "test_p90"]
    assert len(conv) == 15
    theta = rows(out / "cddm" / "theta.csv")
    assert list(theta[0]) == ["candidate_index", "theta", "accepted"]
    mags = [abs(float(r["theta"])) for r in theta]
    assert all(b <= a for a, b in zip(mags, mags[1:]))
    doc = json.loads((out / "cddm" / "trials" / "trial_001.json").read_text())
    assert doc["master_seed"] == 5 and "k_prime=3" in doc["config"]
    summary = (out / "summary.txt").read_text()
    assert "DDM" in summary and "+-" in summary and "master_seed=5" in summary
    assert b"\r" not in (out / "ddm" / "convergence.csv").read_bytes()
    assert main(["run", "--config", cfg]) == 0
    for p, lines in first.items():
        assert body(p) == lines


@pytest.mark.parametrize("text, fragment", [
    (RUN_CFG.replace("trials = 2", "trials = 0"), "trials: must be >= 1"),
    (RUN_CFG + "tehta0 = -0.01\n", "unknown key 'tehta0'"),
    (RUN_CFG.replace("k_prime = 3\n", ""), "missing required key(s): k_prime"),
    (RUN_CFG.replace("mode = both", "mode = fast"), "bad value for mode"),
])
def test_config_errors(tmp_path, capsys, text, fragment):
    assert main(["run", "--config", write_cfg(tmp_path, text)]) == 1
    assert fragment in capsys.readouterr().err


def test_config_error_has_line_number():
    with pytest.raises(ConfigError, match=r"x.cfg:3: unknown key"):
        from pathlib import Path
        parse_config("dataset = tf1\nmode = ddm\nbogus = 1\n", Path("x.cfg"))


def test_missing_dataset_file(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "none.dat"), "--mode", "ddm", "--m", "3",
                 "--k-prime", "3", "--out", str(tmp_path / "m.json")])
    assert code == 2 and "not found" in capsys.readouterr().err
    cfg = write_cfg(tmp_path, RUN_CFG.replace("dataset = tf1", "dataset = nothere.dat"))
    assert main(["run", "--config", cfg]) == 2


def test_train_load_predict_same_rmse(tmp_path, keel200, capsys):
    model = tmp_path / "m.json"
    test_csv = tmp_path / "test.csv"
    code = main(["train", "--data", str(keel200), "--mode", "cddm", "--m", "10", "--k-prime", "5",
                 "--seed", "3", "--out", str(model), "--test-csv", str(test_csv)])
    assert code == 0
    reported = capsys.readouterr().out.split("test_rmse=")[1].split()[0]
    assert main(["predict", "--model", str(model), "--input", str(test_csv),
                 "--out", str(tmp_path / "p.csv")]) == 0
    assert capsys.readouterr().out.strip() == f"rmse={reported}"
    assert main(["predict", "--model", str(model), "--input", str(test_csv),
                 "--out", str(tmp_path / "p2.csv"), "--denormalize"]) == 0


def test_theta_zero_cddm_same_nodes_as_ddm(tmp_path, keel200, capsys):
    outs = []
    for mode, extra in (("cddm", ["--theta0", "0"]), ("ddm", [])):
        path = tmp_path / f"{mode}.json"
        assert main(["train", "--data", str(keel200), "--mode", mode, "--m", "20", "--k-prime", "5",
                     "--seed", "8", "--out", str(path), *extra]) == 0
        outs.append(json.loads(path.read_text()))
        capsys.readouterr()
    assert outs[0]["m"] == outs[1]["m"] == 20
    assert [n["a"] for n in outs[0]["nodes"]] == [n["a"] for n in outs[1]["nodes"]]


def test_partial_exit_code(tmp_path, capsys):
    code = main(["train", "--synthetic", "tf1", "--mode", "cddm", "--m", "40", "--k-prime", "3",
                 "--max-candidates", "5", "--out", str(tmp_path / "m.json")])
    assert code == 4
    assert (tmp_path / "m.json").exists()


def test_crossval_single_cell_and_reproducible(tmp_path, capsys):
    text = "dataset = tf1\nmode = cddm\nk_prime_grid = 3\nm_grid = 10\nfolds = 3\nn_train = 120\n" \
           "master_seed = 2\noutput_dir = cv\n"
    cfg = write_cfg(tmp_path, text)
    assert main(["crossval", "--config", cfg]) == 0
    assert "selected k_prime=3 m=10" in capsys.readouterr().out
    first = body(tmp_path / "cv" / "cv_scores.csv")
    assert main(["crossval", "--config", cfg]) == 0
    assert body(tmp_path / "cv" / "cv_scores.csv") == first
    assert first[1] == "k_prime,m,fold,rmse" and len(first) == 2 + 3


def test_plotdata_kinds(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG)
    assert main(["run", "--config", cfg]) == 0
    rec = str(tmp_path / "out")
    fc = tmp_path / "fit.csv"
    assert main(["plotdata", "--records", rec, "--kind", "fitcurve", "--mode", "cddm", "--out", str(fc)]) == 0
    data = rows(fc)
    assert len(data) == 300
    for r in data:
        terms = np.array([float(v) for k, v in r.items() if k.startswith("node_")])
        assert abs(terms.sum() - float(r["fitted"])) <= 1e-10
        assert float(r["target"]) == pytest.approx(tf1(float(r["x"])), abs=1e-15)
    th = tmp_path / "theta.csv"
    assert main(["plotdata", "--records", rec, "--kind", "theta", "--out", str(th)]) == 0
    assert rows(th)[0]["candidate_index"] == "1"
    cv = tmp_path / "conv.csv"
    assert main(["plotdata", "--records", rec, "--kind", "convergence", "--out", str(cv)]) == 0
    assert {r["mode"] for r in rows(cv)} == {"ddm", "cddm"}


def test_plotdata_fitcurve_rejects_2d(tmp_path, capsys):
    text = RUN_CFG.replace("dataset = tf1", "dataset = tf2").replace("mode = both", "mode = cddm")
    assert main(["run", "--config", write_cfg(tmp_path, text)]) == 0
    code = main(["plotdata", "--records", str(tmp_path / "out"), "--kind", "fitcurve"])
    assert code == 1 and "one-dimensional" in capsys.readouterr().err


def test_tf1_fitcurve_close_to_target(tmp_path, capsys):
    text = ("dataset = tf1\nmode = cddm\nm = 60\nk_prime = 5\ntrials = 1\nmaster_seed = 3\n"
            "output_dir = out\nworkers = 1\n")
    assert main(["run", "--config", write_cfg(tmp_path, text)]) == 0
    fc = tmp_path / "fit.csv"
    assert main(["plotdata", "--records", str(tmp_path / "out"), "--kind", "fitcurve", "--out", str(fc)]) == 0
    data = rows(fc)
    err = np.sqrt(np.mean([(float(r["fitted"]) - float(r["target"])) ** 2 for r in data]))
    assert err <= 1e-3
