"""Command-line entry point.

Commands::

    cddm run --config PATH
    cddm train (--data PATH | --synthetic tf1|tf2) --mode ddm|cddm --m INT --k-prime INT --out PATH
    cddm crossval --config PATH
    cddm plotdata --records DIR --kind convergence|theta|fitcurve
    cddm predict --model PATH --input CSV --out CSV

Exit codes: 0 success, 1 config/user error, 2 data error, 3 numerical failure,
4 partial result (candidate budget exhausted).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from .experiment import ExperimentSetup, prepare_data, run_trials, curve_stats
from .modelselect import DEFAULT_K_PRIMES, DEFAULT_MS, cross_validate, make_plan
from .network import ModelFileError, load_model, rmse, save_model
from .trainer import PartialResultError, TrialRecord, train

log = logging.getLogger("cddm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Experiment config files
# ---------------------------------------------------------------------------

_REQUIRED = {
    "run": ("dataset", "mode", "m", "k_prime", "trials", "master_seed", "output_dir"),
    "crossval": ("dataset", "mode", "master_seed", "output_dir"),
}
_INT = {"m", "m_ddm", "m_cddm", "k_prime", "Q", "trials", "master_seed", "n_train", "n_test",
        "max_candidates", "folds", "repetitions", "workers"}
_FLOAT = {"theta0", "train_fraction", "noise"}
_BOOL = {"resplit", "naive_pinv", "allow_small_k", "reset_q_on_halving"}
_INT_LIST = {"k_prime_grid", "m_grid"}
_STR = {"dataset", "mode", "output_dir"}
_KNOWN = _INT | _FLOAT | _BOOL | _INT_LIST | _STR
# echoed alongside explicit keys so every artifact records the effective settings
_ECHO_DEFAULTS = {"theta0": -0.01, "Q": 50, "train_fraction": 0.75, "resplit": True, "noise": 0.2,
                  "naive_pinv": False, "allow_small_k": False, "reset_q_on_halving": True}


@dataclass
class ExperimentConfig:
    """Parsed ``key = value`` experiment file."""

    values: dict
    path: Path | None = None
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def modes(self) -> list[str]:
        return self.values["mode"]

    def m_for(self, mode: str) -> int:
        return self.values.get(f"m_{mode}", self.values.get("m"))

    def dataset_ref(self) -> str:
        d = self.values["dataset"]
        if d in ("tf1", "tf2"):
            return d
        p = Path(d)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return str(p)

    def setup(self, mode: str) -> ExperimentSetup:
        v = self.values
        kw = {key: v[key] for key in ("theta0", "Q", "train_fraction", "resplit", "noise", "n_train",
                                      "n_test", "max_candidates", "naive_pinv", "allow_small_k",
                                      "reset_q_on_halving") if key in v}
        return ExperimentSetup(self.dataset_ref(), mode, self.m_for(mode), v.get("k_prime", 2), **kw)

    def echo(self) -> str:
        def fmt(v):
            if isinstance(v, (list, tuple)):
                return ",".join(str(x) for x in v)
            return str(v)
        merged = {**_ECHO_DEFAULTS, **self.values}
        return " ".join(f"{k}={fmt(merged[k])}" for k in sorted(merged))


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_config(text: str, path: Path | None = None, command: str = "run") -> ExperimentConfig:
    where = str(path) if path else "<config>"
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN:
            raise ConfigError(f"{where}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}:{lineno}: duplicate key {key!r}")
        try:
            if key in _INT:
                values[key] = int(val)
            elif key in _FLOAT:
                values[key] = float(val)
            elif key in _BOOL:
                values[key] = _parse_bool(val)
            elif key in _INT_LIST:
                values[key] = [int(x) for x in val.replace(",", " ").split()]
            elif key == "mode":
                modes = [x.strip().lower() for x in val.replace(",", " ").split()]
                if modes == ["both"]:
                    modes = ["ddm", "cddm"]
                if not modes or any(x not in ("ddm", "cddm") for x in modes):
                    raise ValueError(f"mode must be ddm, cddm or both, got {val!r}")
                values[key] = modes
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"{where}:{lineno}: bad value for {key}: {exc}") from None
        lines[key] = lineno
    missing = [k for k in _REQUIRED[command] if k not in values]
    if command == "run" and "m" in missing and all(f"m_{md}" in values for md in values.get("mode", [])):
        missing.remove("m")
    if missing:
        raise ConfigError(f"{where}: missing required key(s): {', '.join(missing)}")
    cfg = ExperimentConfig(values, path, lines)
    _validate(cfg, where, command)
    return cfg


def _validate(cfg: ExperimentConfig, where: str, command: str):
    v = cfg.values

    def bad(key, msg):
        ln = cfg.lines.get(key)
        raise ConfigError(f"{where}:{ln}: {key}: {msg}" if ln else f"{where}: {key}: {msg}")

    if command == "run" and v["trials"] < 1:
        bad("trials", "must be >= 1")
    for key in ("m", "m_ddm", "m_cddm", "Q", "folds", "repetitions", "max_candidates"):
        if key in v and v[key] < 1:
            bad(key, "must be >= 1")
    if "k_prime" in v and v["k_prime"] < 2:
        bad("k_prime", "must be >= 2")
    if "theta0" in v and v["theta0"] > 0:
        bad("theta0", "must be <= 0")
    if "train_fraction" in v and not 0 < v["train_fraction"] < 1:
        bad("train_fraction", "must lie in (0, 1)")
    if "noise" in v and v["noise"] < 0:
        bad("noise", "must be >= 0")
    for key in _INT_LIST:
        if key in v and not v[key]:
            bad(key, "empty list")
    if command == "crossval" and len(v["mode"]) != 1:
        bad("mode", "crossval needs a single mode")


def load_config(path, command: str = "run") -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path, command)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _header_lines(echo: str) -> list[str]:
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return [f"# generated: {stamp}", f"# config: {echo}"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path_or_stream, header, rows, echo: str | None = None) -> None:
    """CSV with LF endings; optional leading ``#`` lines carry a timestamp and config echo."""
    own = not hasattr(path_or_stream, "write")
    fh = open(path_or_stream, "w", newline="") if own else path_or_stream
    try:
        if echo is not None:
            for line in _header_lines(echo):
                fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if own:
            fh.close()


def convergence_rows(records):
    tr = curve_stats([r.train_rmse for r in records])
    te = curve_stats([r.test_rmse for r in records])
    for j, n in enumerate(tr["node_count"]):
        yield (n, tr["median"][j], tr["p10"][j], tr["p90"][j], te["median"][j], te["p10"][j], te["p90"][j])


CONVERGENCE_HEADER = ["node_count", "train_median", "train_p10", "train_p90", "test_median", "test_p10", "test_p90"]
THETA_HEADER = ["candidate_index", "theta", "accepted"]


def theta_rows(record: TrialRecord):
    for t, (th, acc) in enumerate(zip(record.theta_trace, record.accepted_trace), start=1):
        yield (t, th, bool(acc))


def table_block(rows: list[dict], setups: dict, dataset: str) -> str:
    """Summary in the layout of a method comparison table."""
    out = io.StringIO()
    out.write(f"Data: {dataset}\n")
    out.write(f"{'Method':<7} {'RMSE (median +- IQR)':<24} {'Parameters':<40} {'nodes':>6} {'trials':>7}\n")
    for row in rows:
        s = setups[row["mode"]]
        params = f"m={s.m}, k'={s.k_prime}"
        if row["mode"] == "cddm":
            params += f", theta={s.theta0:g}, Q={s.Q}"
        rmse_s = f"{row['median_test_rmse']:.4f} +- {row['iqr_test_rmse']:.4f}"
        out.write(f"{row['mode'].upper():<7} {rmse_s:<24} {params:<40} {row['median_nodes']:>6g} "
                  f"{row['succeeded']:>3}/{row['trials']:<3}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = load_config(args.config, "run")
    out_dir = Path(cfg["output_dir"])
    if not out_dir.is_absolute():
        out_dir = Path(args.config).parent / out_dir
    echo = cfg.echo()
    _check_dataset(cfg.dataset_ref())
    rows, setups, partial = [], {}, False
    for mode in cfg.modes:
        setup = cfg.setup(mode)
        setups[mode] = setup
        summary = run_trials(setup, cfg["trials"], cfg["master_seed"], cfg.get("workers"))
        mdir = out_dir / mode
        (mdir / "trials").mkdir(parents=True, exist_ok=True)
        for o in summary.outcomes:
            if o.error and not o.error.startswith("partial"):
                if "LinAlgError" in o.error or "FloatingPoint" in o.error:
                    raise FloatingPointError(f"trial {o.trial}: {o.error}")
                raise DataError(f"trial {o.trial}: {o.error}")
            partial |= bool(o.error)
            doc = {"config": echo, "master_seed": cfg["master_seed"], "setup": asdict(setup),
                   "trial": o.trial, "data_seed": o.data_seed, "train_seed": o.train_seed,
                   "error": o.error, "record": o.record.to_dict() if o.record else None}
            (mdir / "trials" / f"trial_{o.trial:03d}.json").write_text(json.dumps(doc, indent=1) + "\n")
        records = summary.records
        write_csv(mdir / "convergence.csv", CONVERGENCE_HEADER, convergence_rows(records), echo)
        if mode == "cddm" and records:
            write_csv(mdir / "theta.csv", THETA_HEADER, theta_rows(records[0]), echo)
        row = summary.table_row()
        rows.append(row)
        (mdir / "summary.json").write_text(json.dumps({"config": echo, **row}, indent=1) + "\n")
    block = table_block(rows, setups, cfg["dataset"])
    (out_dir / "summary.txt").write_text("\n".join(_header_lines(echo)) + "\n" + block)
    print(block, end="")
    return EXIT_PARTIAL if partial else EXIT_OK


def _check_dataset(ref: str):
    if ref not in ("tf1", "tf2") and not Path(ref).is_file():
        raise DataError(f"dataset file not found: {ref}")


def cmd_train(args) -> int:
    if bool(args.data) == bool(args.synthetic):
        raise ConfigError("give exactly one of --data or --synthetic")
    ref = args.synthetic or args.data
    _check_dataset(ref)
    setup = ExperimentSetup(ref, args.mode, args.m, args.k_prime, theta0=args.theta0, Q=args.Q,
                            train_fraction=args.train_fraction, noise=args.noise,
                            max_candidates=args.max_candidates, naive_pinv=args.naive_pinv,
                            allow_small_k=args.allow_small_k, reset_q_on_halving=not args.literal_stall)
    tr, te = prepare_data(setup, args.seed)
    status = EXIT_OK
    try:
        with warnings.catch_warnings():
            if args.allow_small_k:
                warnings.simplefilter("ignore")
            model, record = train(tr, setup.train_config(args.seed), te)
    except PartialResultError as exc:
        model, record = exc.model, exc.record
        print(f"warning: {exc}", file=sys.stderr)
        status = EXIT_PARTIAL
    model.metadata["dataset"] = ref
    save_model(model, args.out)
    if args.test_csv:
        ds_mod.to_csv(te, args.test_csv)
    train_rmse = rmse(model.predict(tr.X), tr.y) if model.m else float("nan")
    test_rmse = rmse(model.predict(te.X), te.y) if model.m else float("nan")
    print(f"nodes={model.m} candidates={record.n_candidates} train_rmse={train_rmse!r} test_rmse={test_rmse!r}")
    return status


def cmd_predict(args) -> int:
    model = load_model(args.model)
    try:
        data = ds_mod.read_csv(args.input)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if data.n != model.n:
        raise DataError(f"{args.input}: {data.n} inputs, model expects {model.n}")
    pred = model.predict(data.X)
    out = model.normalizer.inverse_y(pred) if args.denormalize else pred
    write_csv(args.out, ["prediction"], ((v,) for v in out))
    if args.input and _has_targets(args.input):
        print(f"rmse={rmse(pred, data.y)!r}")
    return EXIT_OK


def _has_targets(path) -> bool:
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                return line.strip().split(",")[-1].strip() == "y"
    return False


def cmd_crossval(args) -> int:
    cfg = load_config(args.config, "crossval")
    out_dir = Path(cfg["output_dir"])
    if not out_dir.is_absolute():
        out_dir = Path(args.config).parent / out_dir
    ref = cfg.dataset_ref()
    _check_dataset(ref)
    mode = cfg.modes[0]
    setup = cfg.setup(mode)
    tr, _ = prepare_data(setup, cfg["master_seed"])
    plan = make_plan(tr.N, cfg.get("k_prime_grid", DEFAULT_K_PRIMES), cfg.get("m_grid", DEFAULT_MS),
                     cfg.get("folds", 10), cfg.get("repetitions", 1), cfg["master_seed"])
    res = cross_validate(tr, plan, mode, theta0=setup.theta0, Q=setup.Q, allow_small_k=True,
                         reset_q_on_halving=setup.reset_q_on_halving)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "cv_scores.csv", ["k_prime", "m", "fold", "rmse"],
              ((kp, m, f + 1, r) for kp, m, f, r in res.rows), cfg.echo())
    print(f"selected k_prime={res.best_k_prime} m={res.best_m} "
          f"rmse={res.scores[(res.best_k_prime, res.best_m)]!r}")
    return EXIT_OK


def _load_records(root: Path):
    files = sorted(root.rglob("trial_*.json"))
    if not files:
        raise DataError(f"no trial records under {root}")
    out = []
    for f in files:
        doc = json.loads(f.read_text())
        if doc.get("record"):
            out.append((doc, TrialRecord.from_dict(doc["record"])))
    return out


def cmd_plotdata(args) -> int:
    root = Path(args.records)
    items = _load_records(root)
    stream = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if args.kind == "convergence":
            header = ["mode"] + CONVERGENCE_HEADER
            rows = []
            for mode in ("ddm", "cddm"):
                recs = [r for d, r in items if r.mode == mode and not d.get("error")]
                rows += [(mode,) + row for row in convergence_rows(recs)] if recs else []
            _write_mixed(stream, header, rows)
        elif args.kind == "theta":
            recs = [(d, r) for d, r in items if r.mode == "cddm" and d.get("trial") == args.trial]
            if not recs:
                raise DataError(f"no CD-DM record for trial {args.trial} under {root}")
            write_csv(stream, THETA_HEADER, theta_rows(recs[0][1]))
        else:
            recs = [(d, r) for d, r in items if d.get("trial") == args.trial and r.model is not None]
            if args.mode:
                recs = [(d, r) for d, r in recs if r.mode == args.mode]
            if not recs:
                raise DataError(f"no model for trial {args.trial} under {root}")
            doc, rec = recs[0]
            model = rec.model
            if model.n != 1:
                raise ConfigError(f"fitcurve needs a one-dimensional dataset, model has n={model.n}")
            x = np.linspace(0.0, 1.0, 300)
            dataset = doc.get("setup", {}).get("dataset")
            target = ds_mod.tf1(x) if dataset == "tf1" else np.full_like(x, np.nan)
            parts = model.contributions(x[:, None])
            # summing the written terms keeps the fitted column consistent with them
            # even when large opposing weights make the matmul order visible
            fitted = parts.sum(axis=1)
            header = ["x", "target", "fitted"] + [f"node_{j + 1}" for j in range(model.m)]
            write_csv(stream, header, (
                (x[i], target[i], fitted[i], *parts[i]) for i in range(x.size)))
    finally:
        if args.out:
            stream.close()
    return EXIT_OK


def _write_mixed(stream, header, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row[0]] + [_fmt(v) for v in row[1:]])


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cddm", description="Constructive data-driven randomized FNN learning")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run repeated trials from a config file")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train and save a single model")
    src = t.add_mutually_exclusive_group()
    src.add_argument("--data", help="KEEL .dat file")
    src.add_argument("--synthetic", choices=("tf1", "tf2"))
    t.add_argument("--mode", choices=("ddm", "cddm"), default="cddm")
    t.add_argument("--m", type=int, required=True)
    t.add_argument("--k-prime", type=int, required=True)
    t.add_argument("--theta0", type=float, default=-0.01)
    t.add_argument("--Q", type=int, default=50)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--train-fraction", type=float, default=0.75)
    t.add_argument("--noise", type=float, default=0.2)
    t.add_argument("--max-candidates", type=int)
    t.add_argument("--naive-pinv", action="store_true", help="re-solve with a full pseudoinverse per candidate")
    t.add_argument("--allow-small-k", action="store_true", help="allow k' - 1 < n without a warning")
    t.add_argument("--literal-stall", action="store_true",
                   help="do not restart the stall counter after halving theta")
    t.add_argument("--test-csv", help="also write the (normalized) test split here")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("crossval", help="10-fold cross-validation over k' and m")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_crossval)

    d = sub.add_parser("plotdata", help="emit plot-ready CSV from trial records")
    d.add_argument("--records", required=True)
    d.add_argument("--kind", choices=("convergence", "theta", "fitcurve"), required=True)
    d.add_argument("--trial", type=int, default=0)
    d.add_argument("--mode", choices=("ddm", "cddm"))
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)

    pr = sub.add_parser("predict", help="batch prediction from CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--denormalize", action="store_true", help="write predictions in original target units")
    pr.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ds_mod.KeelParseError, ModelFileError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
