"""Command-line entry point: ``qlab {fit,sgp,diagnose,bench,reproduce}``.

Settings are resolved in this order, first hit wins:

1. flags given on the command line,
2. keys in the ``--config`` file (flat ``key = value`` lines, ``#`` comments),
3. built-in defaults.

Exit codes: 0 ok, 2 bad input, 3 solver or training failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench
from .cjqr import fit_joint, verify_noncrossing
from .core import Method, TauGrid, ValidationError, load_csv, numeric_columns, read_table
from .isotonize import CORRECTIONS, quantile_property_gap
from .mqgd import MqgdConfig, TrainingError, crossing_rate
from .mqgd import fit as fit_mqgd
from .qr import SolverError, fit_independent
from .report import (config_hash, dump_json, format_reproduce, load_model, reproduce,
                     save_model)
from .sgp import parse_policy, sgp_batch

log = logging.getLogger("qlab")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 2, 3, 4

DEFAULTS = {
    "method": "independent",
    "taus": "sgp",
    "policy": "auto-isotonize(rearrange)",
    "seed": 42,
    "out_dir": ".",
    "intercept": True,
}

_MQGD_KEYS = {
    "hidden_units": int, "max_iters": int, "patience": int, "min_improvement": float,
    "optimizer": str, "learning_rate": float, "history": int, "grad_tol": float,
    "crossing_penalty": float, "monitor_margin": float,
}
_KNOWN_KEYS = {"data", "response", "method", "taus", "policy", "seed", "out_dir", "model",
               "students", "id_column", "intercept"} | set(_MQGD_KEYS)


def read_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8") if Path(path).is_file() else None
    if text is None:
        raise ValidationError(f"no such config file: {path}")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string("[qlab]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    out = {}
    for key, value in parser["qlab"].items():
        key = key.replace("-", "_")
        if key not in _KNOWN_KEYS:
            raise ValidationError(f"{path}: unknown config key {key!r}")
        out[key] = value
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {v!r}")


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config over defaults."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        settings[key] = value
    try:
        settings["seed"] = int(settings["seed"])
    except ValueError:
        raise ValidationError(f"seed must be an integer, got {settings['seed']!r}") from None
    settings["intercept"] = _bool(settings["intercept"])
    return settings


def mqgd_config(settings: dict) -> MqgdConfig:
    kw = {"seed": settings["seed"]}
    for key, kind in _MQGD_KEYS.items():
        if key in settings:
            try:
                kw[key] = kind(settings[key])
            except ValueError:
                raise ValidationError(f"{key}: cannot parse {settings[key]!r}") from None
    try:
        return MqgdConfig(**kw)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _require(settings, key):
    if not settings.get(key):
        raise ValidationError(f"--{key.replace('_', '-')} is required")
    return settings[key]


def _response_column(settings, path) -> str:
    if settings.get("response"):
        return settings["response"]
    header, _ = read_table(path)
    return header[-1]


def _out_dir(settings) -> Path:
    out = Path(settings["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(settings: dict) -> int:
    path = _require(settings, "data")
    data = load_csv(path, _response_column(settings, path), intercept=settings["intercept"])
    taus = TauGrid.parse(str(settings["taus"]))
    try:
        method = Method(settings["method"])
    except ValueError:
        raise ValidationError(f"unknown method {settings['method']!r}; choose from "
                              f"{[m.value for m in Method]}") from None
    out = _out_dir(settings)
    report = {"tool_version": __version__, "seed": settings["seed"], "method": method.value,
              "data": str(path), "n": data.n, "p": data.p, "taus": taus.taus.tolist()}
    cfg_record = {"method": method.value, "taus": taus.taus.tolist(), "seed": settings["seed"],
                  "intercept": settings["intercept"]}
    if method is Method.INDEPENDENT:
        model = fit_independent(data, taus)
    elif method is Method.CJQR:
        model, stats = fit_joint(data, taus)
        report["joint_lp"] = {"n_vars": stats.n_vars, "n_eq": stats.n_eq, "n_ineq": stats.n_ineq,
                              "pivots": stats.iterations}
    else:
        cfg = mqgd_config(settings)
        cfg_record["mqgd"] = cfg.as_dict()
        model, trace = fit_mqgd(data, taus, cfg)
        trace.to_csv(out / "trace.csv")
        report["training"] = {"stop_reason": trace.stop_reason.value, "iterations": trace.stopped_at,
                              "evaluations": trace.evaluations,
                              "composite_loss": trace.final_composite}
    viol = verify_noncrossing(model, data)
    report.update({
        "config_hash": config_hash(cfg_record),
        "per_tau_loss": dict(zip((repr(t) for t in taus), model.fit_loss.tolist())),
        "total_loss": float(model.fit_loss.sum()),
        "crossing": {"violations": viol.count, "max_magnitude": viol.max_magnitude,
                     "worst_row": viol.worst_row, "worst_pair": viol.worst_pair,
                     "rows_checked": data.n},
    })
    save_model(model, out / "model.json")
    dump_json(report, out / "fit_report.json")
    print(f"fitted {method.value} at {len(taus)} levels on {data.n} rows; "
          f"total check loss {report['total_loss']:.6g}; "
          f"{viol.count} crossing violations on training rows")
    print(f"wrote {out / 'model.json'} and {out / 'fit_report.json'}")
    return EXIT_OK


def _load_students(path, model, id_column):
    header, body = read_table(path)
    covs = [f for f in model.feature_names if f != "(intercept)"]
    x = numeric_columns(path, header, body, covs + [model.response_name])
    y = x[:, -1]
    x = x[:, :-1]
    if "(intercept)" in model.feature_names:
        x = np.column_stack([np.ones(len(body)), x])
    if id_column and id_column in header:
        j = header.index(id_column)
        ids = [r[j].strip() for r in body]
    else:
        ids = [str(i + 1) for i in range(len(body))]
    return ids, x, y


def cmd_sgp(settings: dict) -> int:
    model = load_model(_require(settings, "model"))
    students = _require(settings, "students")
    policy = parse_policy(settings["policy"])
    ids, x, y = _load_students(students, model, settings.get("id_column", "student_id"))
    results, summary = sgp_batch(model, x, y, policy, ids)
    out = _out_dir(settings)
    with (out / "sgp_scores.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["student_id", "tau_hat", "sgp_1_99", "clamped", "crossed_before_correction",
                    "max_violation", "error"])
        for r in results:
            s = r.score
            w.writerow([r.student_id, "" if s is None else repr(s.tau_hat), "" if s is None else s.sgp,
                        "" if s is None else int(s.clamped), int(r.crossed_before_correction),
                        repr(r.max_violation), r.error or ""])
    dump_json({"tool_version": __version__, "seed": settings["seed"], "model_method": model.method.value,
               **summary.as_dict()}, out / "sgp_summary.json")
    print(f"scored {summary.n} students with policy {policy}; crossing frequency "
          f"{summary.crossing_frequency:.3f}, max violation {summary.max_violation:.4g}")
    if summary.crossing_errors:
        print(f"{summary.crossing_errors} students could not be scored on crossing sheets")
    return EXIT_OK


def cmd_diagnose(settings: dict) -> int:
    model = load_model(_require(settings, "model"))
    path = _require(settings, "data")
    data = load_csv(path, model.response_name, intercept="(intercept)" in model.feature_names,
                    covariates=[f for f in model.feature_names if f != "(intercept)"])
    out = _out_dir(settings)
    coverage = {m: quantile_property_gap(model, data, method=m) for m in CORRECTIONS}
    with (out / "coverage.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["correction", "tau", "coverage_before", "coverage_after", "gap_before", "gap_after"])
        for m, table in coverage.items():
            for r in table.rows:
                w.writerow([m, repr(r.tau), repr(r.coverage_before), repr(r.coverage_after),
                            repr(r.gap_before), repr(r.gap_after)])
    viol = verify_noncrossing(model, data)
    diag = {
        "tool_version": __version__, "seed": settings["seed"], "n": data.n,
        "coverage": {m: t.as_dicts() for m, t in coverage.items()},
        "crossing_training_rows": {"violations": viol.count, "max_magnitude": viol.max_magnitude,
                                   "worst_row": viol.worst_row, "worst_pair": viol.worst_pair,
                                   "rate": crossing_rate(model, data.x)},
    }
    if data.p == 2 and "(intercept)" in model.feature_names:
        lo, hi = float(data.x[:, 1].min()), float(data.x[:, 1].max())
        grid = np.column_stack([np.ones(101), np.linspace(lo, hi, 101)])
        diag["crossing_grid"] = {"lo": lo, "hi": hi, "points": 101, "rate": crossing_rate(model, grid)}
    dump_json(diag, out / "diagnose.json")
    print(f"{'tau':>8}{'raw':>10}{'rearr':>10}{'pav':>10}")
    for j, t in enumerate(model.taus):
        cells = [coverage["none"].rows[j].coverage_before] + \
                [coverage[m].rows[j].coverage_after for m in ("rearrange", "pav")]
        print(f"{t:>8.3f}" + "".join(f"{c:>10.3f}" for c in cells))
    print(f"crossing on training rows: {viol.count} violations, max {viol.max_magnitude:.4g}")
    return EXIT_OK


def cmd_bench(settings: dict) -> int:
    out = _out_dir(settings)
    quick = bool(settings.get("quick"))
    seed = settings["seed"]
    repeats = 1 if quick else 3
    q_list = (2, 3, 4) if quick else (2, 3, 4, 6)
    cells = []
    cells += bench.scaling_run("independent", (100, 200, 400) if quick else (100, 200, 400, 800), (5,),
                               repeats, seed)
    cells += bench.scaling_run("independent", (200,), q_list, repeats, seed)
    cells += bench.scaling_run("cjqr", (200,), q_list, repeats, seed)
    cells += bench.scaling_run("mqgd", (20_000, 40_000, 80_000) if quick else (20_000, 40_000, 80_000, 160_000),
                               (5,), repeats, seed)
    bench.write_cells(cells, out / "bench.csv")

    def pick(method, **fixed):
        return [c for c in cells if c.method == method and all(getattr(c, k) == v for k, v in fixed.items())]

    summary = {
        "tool_version": __version__, "seed": seed, "repeats": repeats,
        "slope_independent_n": bench.slope_in(pick("independent", q=5), "n"),
        "slope_independent_q": bench.slope_in(pick("independent", n=200), "q"),
        "slope_cjqr_q": bench.slope_in(pick("cjqr", n=200), "q"),
        "slope_mqgd_n": bench.slope_in(pick("mqgd"), "n"),
        "invariants_ok": all(c.invariant_ok for c in cells),
    }
    if settings.get("backends"):
        summary["backends"] = bench.compare_backends(repeats, seed)
    dump_json(summary, out / "bench_summary.json")
    print(bench.format_cells(cells))
    for k in ("slope_independent_n", "slope_independent_q", "slope_cjqr_q", "slope_mqgd_n"):
        print(f"{k:<22}{summary[k]:.3f}")
    if "backends" in summary:
        print(bench.format_backends(summary["backends"]))
    return EXIT_OK


def cmd_reproduce(settings: dict) -> int:
    rep = reproduce(seed=settings["seed"])
    out = _out_dir(settings)
    dump_json(rep, out / "reproduce.json")
    print(format_reproduce(rep))
    print(f"wrote {out / 'reproduce.json'}")
    return EXIT_ACCEPTANCE if rep["failed"] else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    ap = argparse.ArgumentParser(prog="qlab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"qlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a multi-quantile model from CSV")
    p.add_argument("--data")
    p.add_argument("--response", help="response column (default: last column)")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--taus", help="comma list such as 0.1,0.5,0.9, or 'sgp' for 0.01..0.99")
    p.add_argument("--no-intercept", dest="intercept", action="store_false", default=None)
    for key, kind in _MQGD_KEYS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=kind if kind is not str else None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sgp", parents=[common], help="score students against a saved model")
    p.add_argument("--model")
    p.add_argument("--students", "--data", dest="students")
    p.add_argument("--policy", help="require-monotone, rearrange, pav or auto-isotonize(<method>)")
    p.add_argument("--id-column", dest="id_column")
    p.set_defaults(func=cmd_sgp)

    p = sub.add_parser("diagnose", parents=[common], help="coverage and crossing tables")
    p.add_argument("--model")
    p.add_argument("--data")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", parents=[common], help="runtime scaling harness")
    p.add_argument("--quick", action="store_true", default=None)
    p.add_argument("--backends", action="store_true", default=None,
                   help="also time the compiled kernels against the numpy fallback")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reproduce", parents=[common], help="rerun the bundled reference example")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        return args.func(settings)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, TrainingError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
