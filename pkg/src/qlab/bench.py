"""Runtime scaling harness for the three estimators, plus a compiled-vs-numpy kernel comparison.

Synthetic data: covariates uniform on [0, 10]; response
``2.0 + 0.1 * sum(x) + (0.5 + 0.1 * x_1) * eps`` with standard normal ``eps``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .cjqr import SizeError, fit_joint, verify_noncrossing
from .core import Dataset, ValidationError
from .mqgd import MqgdConfig, _init_params, _Objective, _Shapes
from .qr import fit_independent

SYNTH_INTERCEPT = 2.0
SYNTH_SLOPE = 0.1
SYNTH_NOISE_BASE = 0.5
SYNTH_NOISE_SLOPE = 0.1

METHODS = ("independent", "cjqr", "mqgd")


def synth(n: int, p: int = 2, seed: int = 0) -> Dataset:
    if p < 1 or n < p:
        raise ValidationError(f"synth needs n >= p >= 1, got n={n}, p={p}")
    rng = np.random.default_rng(seed)
    cov = rng.uniform(0.0, 10.0, size=(n, p - 1))
    eps = rng.standard_normal(n)
    scale = SYNTH_NOISE_BASE + SYNTH_NOISE_SLOPE * (cov[:, 0] if p > 1 else 0.0)
    y = SYNTH_INTERCEPT + SYNTH_SLOPE * cov.sum(axis=1) + scale * eps
    return Dataset.from_arrays(cov, y, intercept=True)


def tau_grid(q: int) -> np.ndarray:
    """``q`` evenly spaced interior levels ``j / (q + 1)``."""
    return np.arange(1, q + 1) / (q + 1)


@dataclass(frozen=True)
class BenchCell:
    method: str
    n: int
    q: int
    seconds: float  # median wall time; for mqgd, per loss/subgradient evaluation
    objective: float
    invariant_ok: bool
    skipped: bool = False
    note: str = ""


def _timed(fn: Callable, repeats: int, warmup: bool):
    if warmup:
        fn()
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return median(times), out


def _sign_condition(model, data) -> bool:
    resid = data.y[:, None] - model.predict_matrix(data.x)
    n = data.n
    neg = (resid < -1e-9).sum(axis=0)
    pos = (resid > 1e-9).sum(axis=0)
    taus = model.taus.taus
    return bool(np.all(neg <= n * taus + 1e-9) and np.all(pos <= n * (1 - taus) + 1e-9))


def _cell(method: str, n: int, q: int, repeats: int, seed: int, warmup: bool,
          mqgd_evals: int) -> BenchCell:
    data = synth(n, 2, seed)
    taus = tau_grid(q)
    if method == "independent":
        secs, model = _timed(lambda: fit_independent(data, taus, threads=1), repeats, warmup)
        return BenchCell(method, n, q, secs, float(model.fit_loss.sum()), _sign_condition(model, data))
    if method == "cjqr":
        try:
            secs, (model, _) = _timed(lambda: fit_joint(data, taus), repeats, warmup)
        except SizeError as exc:
            return BenchCell(method, n, q, float("nan"), float("nan"), True, True, str(exc))
        ok = verify_noncrossing(model, data, 1e-9).ok
        return BenchCell(method, n, q, secs, float(model.fit_loss.sum()), ok)
    if method == "mqgd":
        cfg = MqgdConfig()
        shapes = _Shapes(data.p, q, 0)
        obj = _Objective(data, taus, shapes)
        theta = _init_params(shapes, cfg.seed)

        def epochs():
            for _ in range(mqgd_evals):
                val, _ = obj(theta)
            return val

        secs, val = _timed(epochs, repeats, warmup)
        return BenchCell(method, n, q, secs / mqgd_evals, float(val), bool(np.isfinite(val)))
    raise ValidationError(f"unknown method {method!r}; choose from {METHODS}")


def scaling_run(method: str, n_list: Sequence[int], q_list: Sequence[int], repeats: int = 3,
                seed: int = 0, warmup: bool = True, mqgd_evals: int = 50) -> list[BenchCell]:
    """Time ``method`` on every (n, q) cell, sequentially.  Guard violations become skipped cells."""
    cells = []
    for q in q_list:
        for n in n_list:
            cells.append(_cell(method, n, q, repeats, seed, warmup, mqgd_evals))
    return cells


def loglog_slope(sizes, seconds) -> float:
    """Least-squares slope of log(seconds) against log(size)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    seconds = np.asarray(seconds, dtype=np.float64)
    keep = np.isfinite(seconds) & (seconds > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(sizes[keep]), np.log(seconds[keep]), 1)[0])


def slope_in(cells: Sequence[BenchCell], axis: str) -> float:
    xs = [getattr(c, axis) for c in cells if not c.skipped]
    ts = [c.seconds for c in cells if not c.skipped]
    return loglog_slope(xs, ts)


def write_cells(cells: Sequence[BenchCell], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n", "q", "seconds", "objective", "invariant_ok", "skipped", "note"])
        for c in cells:
            w.writerow([c.method, c.n, c.q, repr(c.seconds), repr(c.objective),
                        int(c.invariant_ok), int(c.skipped), c.note])


def format_cells(cells: Sequence[BenchCell]) -> str:
    lines = [f"{'method':<12}{'n':>8}{'q':>5}{'seconds':>14}{'objective':>16}  ok"]
    for c in cells:
        secs = "skipped" if c.skipped else f"{c.seconds:.4g}"
        lines.append(f"{c.method:<12}{c.n:>8}{c.q:>5}{secs:>14}{c.objective:>16.6g}  "
                     f"{'yes' if c.invariant_ok else 'NO'}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Backend comparison
# ---------------------------------------------------------------------------


def _kernel_workloads(seed: int = 0) -> dict[str, Callable[[], object]]:
    rng = np.random.default_rng(seed)
    small = synth(400, 2, seed)
    joint = synth(100, 2, seed)
    resid = np.ascontiguousarray(rng.standard_normal((200_000, 5)))
    taus = tau_grid(5)
    sheets = rng.standard_normal((2_000, 99))
    w = np.ones(99)
    return {
        "independent QR (n=400, q=5)": lambda: fit_independent(small, taus, threads=1),
        "CJQR (n=100, q=3)": lambda: fit_joint(joint, tau_grid(3)),
        "pinball terms (200k x 5)": lambda: kernels.pinball_terms(resid, taus),
        "PAV (2000 sheets x 99)": lambda: [kernels.pav(np.ascontiguousarray(r), w) for r in sheets],
    }


def compare_backends(repeats: int = 3, seed: int = 0) -> list[dict]:
    """Median wall time of each workload under every available kernel backend."""
    rows = []
    for name, fn in _kernel_workloads(seed).items():
        row = {"workload": name}
        for backend in kernels.available():
            with kernels.use_backend(backend):
                row[backend], _ = _timed(fn, repeats, warmup=True)
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    return rows


def format_backends(rows: Sequence[dict]) -> str:
    lines = [f"{'workload':<32}{'python s':>12}{'cython s':>12}{'speedup':>9}"]
    for r in rows:
        cy = f"{r['cython']:.4g}" if "cython" in r else "n/a"
        sp = f"{r['speedup']:.1f}x" if "speedup" in r else "n/a"
        lines.append(f"{r['workload']:<32}{r['python']:>12.4g}{cy:>12}{sp:>9}")
    return "\n".join(lines)
