"""Single- and independent multi-quantile linear regression via linear programming."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Dataset, Method, QuantileModel, QuantileSheet, TauGrid, ValidationError
from .lp import LinearProgram, LpStatus, SolverOptions, solve


class SolverError(RuntimeError):
    """The LP solver did not reach an optimal basis."""

    def __init__(self, message, status=None, tau=None):
        super().__init__(message)
        self.status = status
        self.tau = tau


@dataclass(frozen=True)
class PinballEval:
    tau: float
    loss: float


def _check_tau(tau) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    return tau


def pinball(u, tau):
    """Check loss ``u * (tau - 1{u < 0})``; elementwise for arrays."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=np.float64)
    out = u * (tau - (u < 0.0))
    return float(out) if out.ndim == 0 else out


def objective(dataset: Dataset, beta, tau) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (dataset.p,):
        raise ValidationError(f"beta has shape {beta.shape}, expected ({dataset.p},)")
    return float(np.sum(pinball(dataset.y - dataset.x @ beta, tau)))


def evaluate(dataset: Dataset, beta, tau) -> PinballEval:
    return PinballEval(tau=float(tau), loss=objective(dataset, beta, tau))


def build_lp(dataset: Dataset, tau: float) -> LinearProgram:
    """Variables ``[beta (p, free), u+ (n), u- (n)]`` with ``x_i beta + u+_i - u-_i = y_i``."""
    n, p = dataset.x.shape
    eye = np.eye(n)
    a_eq = np.hstack([dataset.x, eye, -eye])
    cost = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)])
    lb = np.concatenate([np.full(p, -np.inf), np.zeros(2 * n)])
    return LinearProgram(cost, a_eq, dataset.y, lb)


def fit_single(dataset: Dataset, tau, opts: Optional[SolverOptions] = None) -> tuple[np.ndarray, float]:
    """Minimise the summed pinball loss at ``tau``; returns ``(beta, objective)``."""
    tau = _check_tau(tau)
    sol = solve(build_lp(dataset, tau), opts)
    if sol.status is LpStatus.INFEASIBLE:
        raise SolverError(f"tau={tau}: LP reported infeasible (internal error)", sol.status, tau)
    if not sol.optimal:
        raise SolverError(f"tau={tau}: solver stopped with status {sol.status.value} "
                          f"after {sol.iterations} pivots", sol.status, tau)
    beta = sol.x[: dataset.p].copy()
    return beta, objective(dataset, beta, tau)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QLAB_THREADS", "1")))
    except ValueError:
        return 1


def fit_independent(dataset: Dataset, taus, opts: Optional[SolverOptions] = None,
                    threads: Optional[int] = None) -> QuantileModel:
    grid = TauGrid.of(taus)
    threads = threads or _threads()
    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: fit_single(dataset, t, opts), grid))
    else:
        results = [fit_single(dataset, t, opts) for t in grid]
    return QuantileModel(
        coef=np.array([b for b, _ in results]),
        taus=grid,
        method=Method.INDEPENDENT,
        fit_loss=np.array([v for _, v in results]),
        feature_names=dataset.feature_names,
        response_name=dataset.response_name,
    )


def predict(model: QuantileModel, x_star) -> QuantileSheet:
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_star.shape != (model.p,):
        raise ValidationError(f"x_star has shape {x_star.shape}, model expects ({model.p},)")
    return QuantileSheet(x_star=x_star, values=model.predict_matrix(x_star[None, :])[0],
                         taus=model.taus, isotonized=False)


def brute_force_oracle(dataset: Dataset, tau) -> tuple[np.ndarray, float]:
    """Exhaustive search over hyperplanes through p data points.

    An optimal quantile fit interpolates at least p observations, so the best
    such hyperplane is a global optimum.  Objective ties (1e-12 relative) go to
    the lexicographically smallest coefficient vector.
    """
    tau = _check_tau(tau)
    n, p = dataset.x.shape
    if p > 3 or n > 200:
        raise ValidationError(f"oracle guard: requires p <= 3 and n <= 200, got p={p}, n={n}")
    X, y = dataset.x, dataset.y
    best_val, best_beta = math.inf, None
    for rows in itertools.combinations(range(n), p):
        sub = X[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        beta = np.linalg.solve(sub, y[list(rows)])
        u = y - X @ beta
        val = float(np.sum(u * (tau - (u < 0.0))))
        tie = abs(val - best_val) <= 1e-12 * (1.0 + abs(val))
        if (val < best_val and not tie) or (tie and tuple(beta) < tuple(best_beta)):
            best_val, best_beta = (val if val < best_val else best_val), beta
    if best_beta is None:
        raise ValidationError("oracle: no subset of rows defines a unique hyperplane")
    return best_beta, best_val
