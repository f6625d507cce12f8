"""Command-line front end.

Every setting is a sectioned key (``chain.T``, ``model.alpha`` ...) that can
come from a ``key=value`` config file (``--config``), from ``--set key=value``
or from a dedicated flag; later sources win. Unknown keys are errors.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .checks import oracle_suite, stable_suite
from .cones import partition_table
from .data import (
    CATALOG,
    Dataset,
    load_csv,
    simulate_experiment,
    true_function,
    write_columns,
    write_csv,
)
from .gp import gp_fit_predict
from .mcmc import ChainConfig
from .model import cv_grid, default_grid, fit_predict, mae
from .partitions import canonicalize, enumerate_patterns
from .stable import RngStream, StableParams


class ConfigError(ValueError):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
KEYS = {
    "data.function": (str, None),
    "data.sigma": (float, 0.5),
    "data.seed": (int, 0),
    "data.train": (str, None),
    "data.test": (str, None),
    "data.input": (str, None),
    "model.alpha": (float, 1.1),
    "model.nu": (float, 1.0),
    "model.grid": (str, "default"),
    "model.batch": (int, 0),
    "chain.T": (int, 3000),
    "chain.burn_in": (int, 1000),
    "chain.seed": (int, 0),
    "chain.chains": (int, 1),
    "chain.thinning": (int, 1),
    "chain.refresh_every": (int, 50),
    "chain.n_samples": (int, 200_000),
    "cv.splits": (int, 5),
    "cv.fraction": (float, 0.8),
    "cv.split_seed": (int, 0),
    "output.dir": (str, "."),
    "output.trace": (_bool, False),
    "partitions.probs": (_bool, False),
}


def parse_config_text(text: str) -> dict:
    """Parse ``key=value`` lines; ``[section]`` headers prefix the keys below them."""
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        out[key] = value
    return out


def resolve_config(file_values: dict, overrides: dict) -> dict:
    cfg = {k: d for k, (_, d) in KEYS.items()}
    for source in (file_values, overrides):
        for key, value in source.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if value is None:
                continue
            try:
                cfg[key] = KEYS[key][0](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    return cfg


def chain_config(cfg: dict) -> ChainConfig:
    return ChainConfig(T=cfg["chain.T"], burn_in=cfg["chain.burn_in"], seed=cfg["chain.seed"],
                       chains=cfg["chain.chains"], thinning=cfg["chain.thinning"],
                       refresh_every=cfg["chain.refresh_every"], n_samples=cfg["chain.n_samples"])


def parse_grid(text: str) -> list[tuple[float, float]]:
    if text.strip() == "default":
        return default_grid()
    cells = []
    for item in text.split(","):
        a, _, n = item.partition(":")
        if not n:
            raise ConfigError(f"grid cells must look like alpha:nu, got {item!r}")
        cells.append((float(a), float(n)))
    return cells


def version_string() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                              cwd=Path(__file__).parent, capture_output=True, text=True,
                              timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _datasets(cfg: dict, need_test: bool = True) -> tuple[Dataset, Dataset | None, str | None]:
    """Training and test sets from exactly one source: a generator or CSV files."""
    fn, train_path = cfg["data.function"], cfg["data.train"]
    if (fn is None) == (train_path is None):
        raise ConfigError("give exactly one of data.function or data.train")
    if fn is not None:
        train, test = simulate_experiment(fn, cfg["data.sigma"], RngStream(cfg["data.seed"]))
        return train, test, fn
    train = load_csv(train_path)
    test = None
    if cfg["data.test"] is not None:
        test = load_csv(cfg["data.test"], require_y=False)
        if test.dim != train.dim:
            raise ConfigError("train and test files have different input dimensions")
    elif need_test:
        raise ConfigError("data.test is required")
    return train, test, None


def _mae_metrics(pred, test: Dataset, fn: str | None) -> dict:
    out = {}
    if test.y is not None:
        out["mae"] = mae(pred, test.y)
    if fn is not None:
        out["mae_truth"] = mae(pred, true_function(fn, test.X))
    return out


def cmd_simulate(cfg, out: Path) -> dict:
    if cfg["data.function"] is None:
        raise ConfigError("simulate needs data.function")
    train, test, _ = _datasets(cfg)
    write_csv(out / "train.csv", train)
    write_csv(out / "test.csv", test)
    print(f"wrote {len(train)} training and {len(test)} test rows to {out}")
    return {"n_train": len(train), "n_test": len(test)}


def cmd_partitions(cfg, out: Path) -> dict:
    if cfg["data.input"] is not None:
        X = load_csv(cfg["data.input"], require_y=False).X
    else:
        train, test, _ = _datasets(cfg, need_test=False)
        X = train.X if test is None else np.vstack([train.X, test.X])
    cols = {}
    if cfg["partitions.probs"]:
        table = partition_table(X, n_samples=cfg["chain.n_samples"])
        patterns = table.patterns
        cols["prob"] = table.probs
        cols["std_error"] = table.std_errors
        extra = {"raw_sum": table.raw_sum, "exact": table.exact}
    else:
        uniq, inverse = np.unique(X, axis=0, return_inverse=True)
        patterns = canonicalize(enumerate_patterns(uniq)[:, np.asarray(inverse).ravel()])
        extra = {}
    for i in range(patterns.shape[1]):
        cols[f"t{i + 1}"] = patterns[:, i]
    write_columns(out / "partitions.csv", cols)
    print(f"points={len(X)} unique={len(np.unique(X, axis=0))} patterns={len(patterns)}")
    return {"n_points": len(X), "n_patterns": int(len(patterns)), **extra}


def cmd_fit(cfg, out: Path) -> dict:
    train, test, fn = _datasets(cfg)
    params = StableParams(cfg["model.alpha"], cfg["model.nu"])
    trace = None
    if cfg["output.trace"]:
        trace = out / "trace.jsonl"
        trace.write_text("", encoding="utf-8")
    t0 = time.perf_counter()
    pred = fit_predict(train, test.X, params, chain_config(cfg), trace_path=trace,
                       batch=cfg["model.batch"])
    elapsed = time.perf_counter() - t0
    write_columns(out / "predictions.csv", pred.columns())
    acc_s = np.mean([c.accept_scales.mean() / c.n_patterns for c in pred.chains])
    acc_sig = np.mean([c.accept_sigma.mean() for c in pred.chains])
    metrics = {"alpha": params.alpha, "nu": params.nu, "n_train": len(train), "n_test": len(test),
               "n_patterns": int(pred.chains[0].n_patterns), "runtime_s": elapsed,
               "scale_accept_rate": float(acc_s), "sigma_accept_rate": float(acc_sig),
               **_mae_metrics(pred.median, test, fn)}
    print(json.dumps({k: metrics[k] for k in ("mae", "mae_truth") if k in metrics}))
    return metrics


def cmd_cv(cfg, out: Path) -> dict:
    train, _, _ = _datasets(cfg, need_test=False)
    res = cv_grid(train, parse_grid(cfg["model.grid"]), cfg["cv.splits"], cfg["cv.fraction"],
                  chain_config(cfg), split_seed=cfg["cv.split_seed"])
    cols = {"alpha": [g[0] for g in res.grid], "nu": [g[1] for g in res.grid],
            "mean_mae": res.mean_mae, "se_mae": res.se_mae}
    for k in range(res.mae.shape[1]):
        cols[f"split{k + 1}"] = res.mae[:, k]
    write_columns(out / "cv_table.csv", cols)
    print(f"best alpha={res.best[0]:g} nu={res.best[1]:g}")
    return {"best_alpha": res.best[0], "best_nu": res.best[1],
            "failures": {f"{a:g}:{n:g}": msg for (a, n), msg in res.failures.items()}}


def cmd_gp(cfg, out: Path) -> dict:
    train, test, fn = _datasets(cfg)
    pred = gp_fit_predict(train, test.X)
    sd = np.sqrt(pred.var)
    cols = {f"x{i + 1}": test.X[:, i] for i in range(test.dim)}
    cols["mean"] = pred.mean
    cols["var"] = pred.var
    for q in (0.05, 0.5, 0.95):
        cols[f"q{round(100 * q):02d}"] = pred.mean + stats.norm.ppf(q) * sd
    write_columns(out / "predictions.csv", cols)
    metrics = {"signal": pred.hyper.signal, "lengths": list(map(float, pred.hyper.lengths)),
               "nugget": pred.hyper.nugget, "log_ml": pred.log_ml,
               **_mae_metrics(pred.mean, test, fn)}
    print(json.dumps({k: metrics[k] for k in ("mae", "mae_truth") if k in metrics}))
    return metrics


def _report(results) -> dict:
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} value={r.value:.4g} threshold={r.threshold:g}")
    return {"checks": [r.as_dict() for r in results], "passed": all(r.passed for r in results)}


def cmd_stable_check(cfg, out: Path) -> dict:
    return _report(stable_suite(seed=cfg["chain.seed"]))


def cmd_oracle_check(cfg, out: Path) -> dict:
    return _report(oracle_suite(seed=cfg["chain.seed"]))


COMMANDS = {
    "simulate": cmd_simulate,
    "partitions": cmd_partitions,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "gp-baseline": cmd_gp,
    "stable-check": cmd_stable_check,
    "oracle-check": cmd_oracle_check,
}

# flag -> config key
FLAGS = {
    "function": "data.function", "sigma": "data.sigma", "train": "data.train",
    "test": "data.test", "input": "data.input", "alpha": "model.alpha", "nu": "model.nu",
    "grid": "model.grid", "batch": "model.batch", "iterations": "chain.T",
    "burn_in": "chain.burn_in", "chains": "chain.chains", "thinning": "chain.thinning",
    "n_samples": "chain.n_samples", "splits": "cv.splits", "fraction": "cv.fraction",
    "out": "output.dir",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablenn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int, help="data seed for simulate, chain seed otherwise")
        p.add_argument("--function", choices=sorted(CATALOG))
        p.add_argument("--sigma", type=float)
        p.add_argument("--train")
        p.add_argument("--test")
        p.add_argument("--input")
        p.add_argument("--alpha", type=float)
        p.add_argument("--nu", type=float)
        p.add_argument("--grid")
        p.add_argument("--batch", type=int)
        p.add_argument("--iterations", "-T", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--chains", type=int)
        p.add_argument("--thinning", type=int)
        p.add_argument("--n-samples", dest="n_samples", type=int)
        p.add_argument("--splits", type=int)
        p.add_argument("--fraction", type=float)
        p.add_argument("--out", "-o")
        p.add_argument("--trace", action="store_true", default=None)
        p.add_argument("--probs", action="store_true", default=None)
    return parser


def _overrides(args) -> dict:
    over = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        over[key.strip()] = value.strip()
    for flag, key in FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            over[key] = v
    if args.seed is not None:
        over["data.seed" if args.command == "simulate" else "chain.seed"] = args.seed
    if args.trace:
        over["output.trace"] = True
    if args.probs:
        over["partitions.probs"] = True
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out or ".")
    try:
        file_values = {}
        if args.config:
            file_values = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
        cfg = resolve_config(file_values, _overrides(args))
        out = Path(cfg["output.dir"])
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, out)
        _write_json(out / "metrics.json", result)
        _write_json(out / "meta.json", {"command": args.command, "config": cfg,
                                        "version": version_string()})
        if result.get("passed") is False:
            return 1
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        record = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "error.json", record)
        except OSError:
            pass
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
