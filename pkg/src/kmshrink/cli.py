"""Command-line entry point.

Exit codes: 0 success, 1 bad input (flags, config, CSV), 2 numerical failure.
Settings come from built-in defaults, then a ``--config`` file, then flags.
The config file is flat, one ``key = <JSON value>`` per line, ``#`` comments.
Every run writes ``effective_config.cfg`` in the same format, so
``kmshrink <command> --config <dir>/effective_config.cfg`` replays it.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from kmshrink import __version__
from kmshrink._errors import InputError, NumericalError
from kmshrink.estimators import KernelMeanEstimate, f_kmse_spectral, s_kmse_weights, shrinkage_amount, uniform_weights
from kmshrink.experiments import (
    KpcaBenchConfig,
    LambdaSweepConfig,
    NdSweepConfig,
    SCHEMA_VERSION,
    run_kpca_bench,
    run_lambda_sweep,
    run_nd_sweep,
    standardize,
    synthetic_dataset,
)
from kmshrink.kernels import KernelSpec, gram
from kmshrink.model_selection import (
    LoocvMethod,
    SearchConfig,
    f_kmse_loocv_refit,
    f_kmse_loocv_score,
    f_kmse_select,
    gram_stats,
    s_kmse_loocv_poly,
    s_kmse_profile,
    s_kmse_select,
)
from kmshrink.operators import distribution_gram
from kmshrink.oracle import ProtocolConfig
from kmshrink.spectral import sym_eig

log = logging.getLogger("kmshrink")

EXPERIMENTS = ("lambda-sweep", "nd-sweep", "kpca-bench")
COMMANDS = EXPERIMENTS + ("estimate", "loocv-profile", "dist-gram")

_PROTOCOL_KEYS = ("d", "components", "pi", "theta_range", "wishart_scale", "wishart_df", "noise_var")
_SEARCH_KEYS = ("grid_size", "lower_multiplier", "upper_multiplier", "rel_tol")

DEFAULTS: dict[str, dict[str, Any]] = {
    "lambda-sweep": {
        "kernels": ["lin", "poly2", "poly3", "rbf"],
        "multipliers": [0.01, 0.1, 1.0, 10.0],
        "trials": 30,
        "n": 10,
        "mc_samples": 20000,
    },
    "nd-sweep": {
        "n_grid": [10],
        "d_grid": [30],
        "trials": 30,
        "kernel": "rbf",
        "criterion": "f_closed_form",
        "mc_samples": 20000,
    },
    "kpca-bench": {
        "kernel": "rbf",
        "n_components": 20,
        "test_fraction": 0.3,
        "repetitions": 10,
        "normalize": True,
        "criterion": "f_closed_form",
        "synthetic_n": 100,
        "d": 10,
    },
    "estimate": {"kernel": "rbf", "estimator": "s-kmse", "normalize": False, "criterion": "f_closed_form"},
    "loocv-profile": {"kernel": "rbf", "estimator": "f-kmse", "normalize": False, "criterion": "f_closed_form"},
    "dist-gram": {"kernel": "rbf", "estimator": "kme", "level2": "linear", "group_column": 0, "normalize": False},
}

for _cmd in COMMANDS:
    DEFAULTS[_cmd].setdefault("output_dir", "kmshrink-out")
    DEFAULTS[_cmd].setdefault("parallelism", 1)


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- config ---------------------------------------------------------------


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise InputError(f"{source}, line {lineno}: expected 'key = value'")
        try:
            out[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise InputError(f"{source}, line {lineno}: value is not valid JSON ({exc.msg})") from exc
    return out


def load_config(path: str | os.PathLike) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config_text(text, str(path))


def format_config(cfg: Mapping[str, Any]) -> str:
    return "".join(f"{k} = {json.dumps(cfg[k], sort_keys=True)}\n" for k in sorted(cfg))


def parse_kernel(value: Any) -> dict[str, Any]:
    """``"rbf"``, ``"rbf:median"``, ``"rbf:2.5"`` (bandwidth_sq), ``"poly2"`` or a dict."""
    if isinstance(value, Mapping):
        return dict(value)
    if not isinstance(value, str):
        raise InputError(f"cannot interpret kernel {value!r}")
    family, _, arg = value.strip().lower().partition(":")
    if family != "rbf":
        if arg:
            raise InputError(f"kernel {family!r} takes no parameter")
        KernelSpec.from_dict({"family": family})
        return {"family": family}
    if arg in ("", "median"):
        return {"family": "rbf", "bandwidth": "median"}
    try:
        return {"family": "rbf", "bandwidth_sq": float(arg)}
    except ValueError:
        raise InputError(f"bad RBF bandwidth {arg!r}") from None


def _listify(value: Any, cast=None) -> list:
    if isinstance(value, str):
        items = [v for v in value.split(",") if v.strip()]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [value]
    if cast is None:
        return items
    try:
        return [cast(v) for v in items]
    except (TypeError, ValueError):
        raise InputError(f"cannot interpret {value!r} as a list of {cast.__name__}") from None


def _protocol(cfg: Mapping[str, Any]) -> ProtocolConfig:
    return ProtocolConfig.from_dict({k: cfg[k] for k in _PROTOCOL_KEYS if k in cfg})


def _search(cfg: Mapping[str, Any]) -> SearchConfig:
    return SearchConfig.from_dict({k: cfg[k] for k in _SEARCH_KEYS if k in cfg})


def _int(cfg, key) -> int:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise InputError(f"{key} must be an integer, got {v!r}")
    return int(v)


def _seed(cfg) -> int:
    if cfg.get("seed") is None:
        raise UsageError(f"{cfg['command']} requires --seed (or 'seed' in the config file)")
    seed = _int(cfg, "seed")
    if seed < 0:
        raise InputError("seed must be non-negative")
    return seed


# --- CSV ------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_rows(path, header: bool | str, delimiter: str) -> tuple[list[str] | None, list[tuple[int, list[str]]]]:
    try:
        with open(path, newline="") as fh:
            raw = [(i, [c.strip() for c in row]) for i, row in enumerate(csv.reader(fh, delimiter=delimiter), 1)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [(i, r) for i, r in raw if any(r)]
    if not rows:
        raise InputError(f"{path} is empty")
    names = None
    if header == "auto":
        header = not any(_is_number(c) for c in rows[0][1])
    if header:
        names = rows[0][1]
        rows = rows[1:]
        if not rows:
            raise InputError(f"{path} has a header but no data rows")
    width = len(rows[0][1])
    for i, r in rows:
        if len(r) != width:
            raise InputError(f"row {i} has {len(r)} columns, expected {width} (ragged CSV)")
    return names, rows


def _column_index(spec: int | str, names: list[str] | None, width: int) -> int:
    if isinstance(spec, str) and not spec.lstrip("-").isdigit():
        if names is None or spec not in names:
            raise InputError(f"no column named {spec!r}")
        return names.index(spec)
    idx = int(spec)
    if not -width <= idx < width:
        raise InputError(f"column {idx} is out of range for {width} columns")
    return idx % width


def _to_matrix(rows, keep: list[int]) -> np.ndarray:
    out = np.empty((len(rows), len(keep)))
    for r, (lineno, cells) in enumerate(rows):
        for c, j in enumerate(keep):
            try:
                out[r, c] = float(cells[j])
            except ValueError:
                raise InputError(f"non-numeric value {cells[j]!r} at row {lineno}, column {j + 1}") from None
    if not np.all(np.isfinite(out)):
        raise InputError("CSV contains non-finite values")
    return out


def ingest_csv(
    path: str | os.PathLike,
    *,
    header: bool | str = "auto",
    label_column: int | str | None = None,
    normalize: bool = False,
    delimiter: str = ",",
) -> np.ndarray:
    """Read a rectangular numeric CSV into an (n, d) float matrix.

    Rows and columns in error messages are 1-based and count the file as
    written (header included).  ``label_column`` (index or header name) is
    dropped before parsing.  ``normalize`` standardizes every column with the
    statistics of the whole file; the KPCA benchmark instead normalizes per
    split with train statistics.
    """
    names, rows = _read_rows(path, header, delimiter)
    width = len(rows[0][1])
    drop = None if label_column is None else _column_index(label_column, names, width)
    keep = [j for j in range(width) if j != drop]
    if not keep:
        raise InputError("no feature columns left after dropping the label column")
    X = _to_matrix(rows, keep)
    return standardize(X)[0] if normalize else X


def ingest_groups(
    path: str | os.PathLike, group_column: int | str = 0, *, header: bool | str = "auto", delimiter: str = ","
) -> tuple[list[str], list[np.ndarray]]:
    """Split a CSV into groups by the value in ``group_column`` (first-seen order)."""
    names, rows = _read_rows(path, header, delimiter)
    width = len(rows[0][1])
    gcol = _column_index(group_column, names, width)
    keep = [j for j in range(width) if j != gcol]
    if not keep:
        raise InputError("no feature columns besides the group column")
    X = _to_matrix(rows, keep)
    labels: dict[str, list[int]] = {}
    for r, (_, cells) in enumerate(rows):
        labels.setdefault(cells[gcol], []).append(r)
    return list(labels), [X[idx] for idx in labels.values()]


# --- output ---------------------------------------------------------------


def _json_ready(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_ready(obj.item())
    return obj


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_json_ready(payload), sort_keys=True, indent=2, allow_nan=False) + "\n")


def write_csv(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    if not rows:
        path.write_text("schema_version\n")
        return
    fields = ["schema_version"] + list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({"schema_version": SCHEMA_VERSION, **{k: ("" if v is None else v) for k, v in row.items()}})


def _metadata(cfg, started: float, extra: Mapping[str, Any] | None = None) -> dict[str, Any]:
    return {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "elapsed_seconds": time.perf_counter() - started,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": cfg["command"],
        **(extra or {}),
    }


# --- commands -------------------------------------------------------------


def _load_data(cfg) -> np.ndarray:
    if not cfg.get("data"):
        raise UsageError(f"{cfg['command']} requires --data")
    return ingest_csv(
        cfg["data"],
        header=cfg.get("header", "auto"),
        label_column=cfg.get("label_column"),
        normalize=bool(cfg.get("normalize", False)),
    )


def cmd_lambda_sweep(cfg, out: Path, started: float) -> int:
    config = LambdaSweepConfig(
        seed=_seed(cfg),
        kernels=tuple(parse_kernel(k) for k in _listify(cfg["kernels"])),
        multipliers=tuple(_listify(cfg["multipliers"], float)),
        trials=_int(cfg, "trials"),
        n=_int(cfg, "n"),
        protocol=_protocol(cfg),
        mc_samples=_int(cfg, "mc_samples"),
    )
    report = run_lambda_sweep(config, _int(cfg, "parallelism"))
    return _write_report(report, out, cfg, started)


def cmd_nd_sweep(cfg, out: Path, started: float) -> int:
    config = NdSweepConfig(
        seed=_seed(cfg),
        n_grid=tuple(_listify(cfg["n_grid"], int)),
        d_grid=tuple(_listify(cfg["d_grid"], int)),
        trials=_int(cfg, "trials"),
        kernel=parse_kernel(cfg["kernel"]),
        protocol=_protocol(cfg),
        criterion=cfg["criterion"],
        search=_search(cfg),
        mc_samples=_int(cfg, "mc_samples"),
    )
    report = run_nd_sweep(config, _int(cfg, "parallelism"))
    return _write_report(report, out, cfg, started)


def _write_report(report, out: Path, cfg, started: float) -> int:
    write_json(out / "results.json", report.to_dict())
    write_csv(out / "aggregates.csv", report.aggregate())
    write_json(out / "metadata.json", _metadata(cfg, started, {"timings": report.timings()}))
    for f in report.failures:
        print(f"warning: trial {f.trial_id} at {dict(f.cell)} excluded ({f.reason}: {f.message})", file=sys.stderr)
    for row in report.aggregate():
        keys = {k: v for k, v in row.items() if k in ("kernel", "multiplier", "n", "d", "scenario")}
        mean = "n/a" if row["mean"] is None else f"{row['mean']:.6g}"
        win = "" if row.get("win_rate") is None else f" win_rate={row['win_rate']:.3f}"
        label = " ".join(f"{k}={v}" for k, v in keys.items())
        print(f"{label} {row.get('estimator', '')} mean={mean} count={row['count']}{win}".strip())
    return 0


def cmd_kpca_bench(cfg, out: Path, started: float) -> int:
    seed = _seed(cfg)
    config = KpcaBenchConfig(
        seed=seed,
        n_components=_int(cfg, "n_components"),
        test_fraction=float(cfg["test_fraction"]),
        repetitions=_int(cfg, "repetitions"),
        kernel=parse_kernel(cfg["kernel"]),
        normalize=bool(cfg["normalize"]),
        criterion=cfg["criterion"],
        search=_search(cfg),
    )
    if cfg.get("data"):
        data = ingest_csv(cfg["data"], header=cfg.get("header", "auto"), label_column=cfg.get("label_column"))
    else:
        data = synthetic_dataset(_protocol(cfg), _int(cfg, "synthetic_n"), seed)
    report = run_kpca_bench(config, data, _int(cfg, "parallelism"))
    write_json(out / "results.json", report.to_dict())
    write_csv(out / "aggregates.csv", report.aggregate())
    write_json(out / "metadata.json", _metadata(cfg, started, {"timings": report.timings()}))
    for rep in report.repetitions:
        for notice in rep.notices:
            print(f"notice: repetition {rep.rep}: {notice}", file=sys.stderr)
    for f in report.failures:
        print(f"warning: repetition {f.trial_id} excluded ({f.reason}: {f.message})", file=sys.stderr)
    for row in report.aggregate():
        mean = "n/a" if row["mean"] is None else f"{row['mean']:.6g} +- {row['std']:.3g}"
        print(f"{row['scenario']}: mean={mean} count={row['count']}")
    return 0


def _estimator_name(cfg) -> str:
    name = str(cfg["estimator"]).lower().replace("_", "-")
    if name not in ("kme", "s-kmse", "f-kmse"):
        raise InputError(f"unknown estimator {cfg['estimator']!r}; choose kme, s-kmse or f-kmse")
    return name


def _fixed_lambda(cfg) -> float | None:
    lam = cfg.get("lambda")
    if lam is None:
        return None
    lam = float(lam)
    if not lam >= 0 or math.isnan(lam):
        raise InputError(f"lambda must be non-negative, got {lam}")
    return lam


def cmd_estimate(cfg, out: Path, started: float) -> int:
    X = _load_data(cfg)
    kernel = KernelSpec.from_dict(parse_kernel(cfg["kernel"]), sample=X)
    est = _estimator_name(cfg)
    n = X.shape[0]
    K = gram(kernel, X)
    stats = gram_stats(K)
    lam_fixed = _fixed_lambda(cfg)
    score = None
    if est == "kme":
        lam, beta = 0.0, uniform_weights(n)
        if n >= 2:
            score = s_kmse_loocv_poly(stats, 0.0)
    elif est == "s-kmse":
        lam = s_kmse_select(stats).lam if lam_fixed is None else lam_fixed
        beta = s_kmse_weights(n, lam)
        if n >= 2:
            score = s_kmse_loocv_poly(stats, shrinkage_amount(lam))
    else:
        dec = sym_eig(K)
        criterion = LoocvMethod(cfg["criterion"])
        if lam_fixed is None:
            lam = f_kmse_select(dec, _search(cfg), criterion).selected_lambda
        else:
            lam = lam_fixed
        if lam == 0.0:
            raise InputError("F-KMSE needs lambda > 0")
        beta = f_kmse_spectral(dec, lam)
        if n >= 2:
            fn = f_kmse_loocv_refit if criterion is LoocvMethod.F_REFIT else f_kmse_loocv_score
            score = fn(dec, lam)
    estimate = KernelMeanEstimate(X, beta, kernel)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "estimator": est,
        "lambda": lam,
        "lambda_source": "fixed" if lam_fixed is not None or est == "kme" else "loocv",
        "alpha": shrinkage_amount(lam) if est == "s-kmse" else None,
        "rho": stats.rho,
        "varrho": stats.varrho,
        "loocv_score": score,
        "estimate": estimate.to_dict(),
    }
    write_json(out / "estimate.json", payload)
    write_json(out / "metadata.json", _metadata(cfg, started))
    if lam_fixed is None:
        print(f"lambda = {lam}")
    else:
        raw = cfg["lambda"]
        print(f"lambda = {raw if isinstance(raw, str) else json.dumps(raw)}")
    if est == "s-kmse":
        print(f"alpha = {shrinkage_amount(lam)}")
    print(f"rho = {stats.rho}")
    print(f"varrho = {stats.varrho}")
    print(f"loocv_score = {score}")
    return 0


def cmd_loocv_profile(cfg, out: Path, started: float) -> int:
    X = _load_data(cfg)
    kernel = KernelSpec.from_dict(parse_kernel(cfg["kernel"]), sample=X)
    K = gram(kernel, X)
    est = _estimator_name(cfg)
    if est == "s-kmse":
        profile = s_kmse_profile(K)
    elif est == "f-kmse":
        profile = f_kmse_select(sym_eig(K), _search(cfg), cfg["criterion"])
    else:
        raise InputError("loocv-profile needs estimator s-kmse or f-kmse")
    write_json(out / "profile.json", {"schema_version": SCHEMA_VERSION, **profile.to_dict()})
    write_csv(out / "profile.csv", [{"lambda": float(l), "score": float(s)} for l, s in zip(profile.lambdas, profile.scores)])
    write_json(out / "metadata.json", _metadata(cfg, started))
    print(f"selected lambda = {profile.selected_lambda}")
    print(f"selected score = {profile.selected_score}")
    return 0


def cmd_dist_gram(cfg, out: Path, started: float) -> int:
    if not cfg.get("data"):
        raise UsageError("dist-gram requires --data")
    labels, groups = ingest_groups(cfg["data"], cfg["group_column"], header=cfg.get("header", "auto"))
    if cfg.get("normalize"):
        pooled = standardize(np.vstack(groups))[0]
        cuts = np.cumsum([g.shape[0] for g in groups])[:-1]
        groups = np.split(pooled, cuts)
    pooled = np.vstack(groups)
    kernel = KernelSpec.from_dict(parse_kernel(cfg["kernel"]), sample=pooled)
    sigma_sq = cfg.get("sigma_sq")
    G = distribution_gram(groups, kernel, _estimator_name(cfg), cfg["level2"], None if sigma_sq is None else float(sigma_sq))
    write_json(out / "dist_gram.json", {"schema_version": SCHEMA_VERSION, "labels": labels, "kernel": kernel.to_dict(), "gram": G.tolist()})
    write_json(out / "metadata.json", _metadata(cfg, started))
    print(f"{len(labels)} groups; Gram written to {out / 'dist_gram.json'}")
    return 0


HANDLERS = {
    "lambda-sweep": cmd_lambda_sweep,
    "nd-sweep": cmd_nd_sweep,
    "kpca-bench": cmd_kpca_bench,
    "estimate": cmd_estimate,
    "loocv-profile": cmd_loocv_profile,
    "dist-gram": cmd_dist_gram,
}


# --- dispatch -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kmshrink", description="Shrinkage kernel mean estimation and experiments.")
    parser.add_argument("--version", action="version", version=f"kmshrink {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--config", help="flat key = JSON-value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir")
        p.add_argument("--parallelism", type=int)
        p.add_argument("--criterion", choices=[LoocvMethod.F_CLOSED_FORM.value, LoocvMethod.F_REFIT.value])
        if name == "lambda-sweep":
            p.add_argument("--kernel", dest="kernels", help="comma-separated kernels, e.g. lin,rbf:median")
            p.add_argument("--multipliers", help="comma-separated multipliers of gamma_0")
        else:
            p.add_argument("--kernel", help="lin, poly2, poly3, rbf, rbf:median or rbf:<bandwidth_sq>")
        if name in EXPERIMENTS:
            p.add_argument("--trials", type=int)
            p.add_argument("--d", type=int)
        if name == "lambda-sweep":
            p.add_argument("--n", type=int)
        if name == "nd-sweep":
            p.add_argument("--n-grid")
            p.add_argument("--d-grid")
        if name in ("estimate", "loocv-profile", "dist-gram"):
            p.add_argument("--estimator")
        if name == "estimate":
            p.add_argument("--lambda", dest="lambda", help="fixed shrinkage parameter (skips LOOCV)")
        if name in ("estimate", "loocv-profile", "dist-gram", "kpca-bench"):
            p.add_argument("--data", help="CSV dataset")
            p.add_argument("--label-column", help="column index or header name to drop")
            p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None)
        if name == "kpca-bench":
            p.add_argument("--n-components", type=int)
            p.add_argument("--repetitions", type=int)
        if name == "dist-gram":
            p.add_argument("--group-column")
            p.add_argument("--level2", choices=["linear", "gaussian"])
            p.add_argument("--sigma-sq", type=float)
    return parser


def _known_keys(command: str) -> set[str]:
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    dests = {a.dest for a in sub._actions if a.dest != "help"}
    return dests | set(DEFAULTS[command]) | set(_PROTOCOL_KEYS) | set(_SEARCH_KEYS) | {"seed", "data", "header", "label_column", "command"}


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        cfg.update(load_config(args.config))
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
    cfg.update(flags)
    unknown = sorted(set(cfg) - _known_keys(args.command))
    if unknown:
        log.warning("ignoring unknown settings for %s: %s", args.command, ", ".join(unknown))
    cfg["command"] = args.command
    return cfg


def _setup_logging() -> None:
    level = os.environ.get("KMSHRINK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        cfg = effective_config(args)
        if args.command in EXPERIMENTS:
            _seed(cfg)
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.cfg").write_text(format_config(cfg))
        return HANDLERS[args.command](cfg, out, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kmshrink: error: {exc}", file=sys.stderr)
        return 1
    except (InputError, OSError, KeyError, TypeError) as exc:
        print(f"kmshrink: input error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"kmshrink: numerical error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"kmshrink: input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
