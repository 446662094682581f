"""Constrained joint quantile regression: all taus in one LP with non-crossing rows."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Dataset, Method, QuantileModel, TauGrid, ValidationError
from .lp import LinearProgram, LpStatus, SolverOptions, solve
from .qr import SolverError, objective

DEFAULT_MAX_NQ = 200_000
DEFAULT_MAX_BYTES = 1 << 30


class SizeError(ValidationError):
    """The joint LP would exceed the configured tractability guard."""


@dataclass(frozen=True)
class JointLpStats:
    n_vars: int  # q*p coefficients + 2*n*q residual parts
    n_eq: int  # n*q
    n_ineq: int  # n*(q-1)
    solve_time: float
    iterations: int = 0


@dataclass(frozen=True)
class ViolationReport:
    count: int
    max_magnitude: float
    worst_row: Optional[int]
    worst_pair: Optional[tuple[int, int]]

    @property
    def ok(self) -> bool:
        return self.count == 0


def tableau_bytes(n: int, p: int, q: int) -> int:
    """Dense working-set estimate for the joint LP tableau."""
    rows = n * q + n * (q - 1) + 1
    cols = 2 * q * p + 2 * n * q + n * (q - 1) + 1
    return 8 * rows * cols


def build_joint_lp(dataset: Dataset, taus: TauGrid) -> LinearProgram:
    """Variable layout: ``[beta_1..beta_q (free), u+ (n q), u- (n q), slack (n (q-1))]``.

    Block j of the residual rows reads ``x_i beta_j + u+_ij - u-_ij = y_i``;
    non-crossing rows read ``x_i beta_j - x_i beta_{j+1} + s_ij = 0``.
    """
    X, y = dataset.x, dataset.y
    n, p = X.shape
    q = len(taus)
    nb, nu, ns = q * p, n * q, n * (q - 1)
    a = np.zeros((nu + ns, nb + 2 * nu + ns))
    cost = np.zeros(nb + 2 * nu + ns)
    for j, tau in enumerate(taus):
        rows = slice(j * n, (j + 1) * n)
        a[rows, j * p:(j + 1) * p] = X
        a[rows, nb + j * n: nb + (j + 1) * n] = np.eye(n)
        a[rows, nb + nu + j * n: nb + nu + (j + 1) * n] = -np.eye(n)
        cost[nb + j * n: nb + (j + 1) * n] = tau
        cost[nb + nu + j * n: nb + nu + (j + 1) * n] = 1.0 - tau
    for j in range(q - 1):
        rows = slice(nu + j * n, nu + (j + 1) * n)
        a[rows, j * p:(j + 1) * p] = X
        a[rows, (j + 1) * p:(j + 2) * p] = -X
        a[rows, nb + 2 * nu + j * n: nb + 2 * nu + (j + 1) * n] = np.eye(n)
    b = np.concatenate([np.tile(y, q), np.zeros(ns)])
    lb = np.concatenate([np.full(nb, -np.inf), np.zeros(2 * nu + ns)])
    return LinearProgram(cost, a, b, lb)


def fit_joint(dataset: Dataset, taus, opts: Optional[SolverOptions] = None,
              max_nq: int = DEFAULT_MAX_NQ, max_bytes: int = DEFAULT_MAX_BYTES
              ) -> tuple[QuantileModel, JointLpStats]:
    grid = TauGrid.of(taus)
    n, p = dataset.x.shape
    q = len(grid)
    if q < 2:
        raise ValidationError("joint fit needs at least two taus")
    if n * q > max_nq:
        raise SizeError(f"joint LP too large: n*q = {n * q} exceeds guard {max_nq}")
    need = tableau_bytes(n, p, q)
    if need > max_bytes:
        raise SizeError(f"joint LP too large: dense tableau ~{need / 2**20:.0f} MiB exceeds "
                        f"guard {max_bytes / 2**20:.0f} MiB (n={n}, q={q})")
    t0 = time.perf_counter()
    sol = solve(build_joint_lp(dataset, grid), opts)
    elapsed = time.perf_counter() - t0
    if not sol.optimal:
        raise SolverError(f"joint LP stopped with status {sol.status.value} after "
                          f"{sol.iterations} pivots", sol.status)
    coef = sol.x[: q * p].reshape(q, p).copy()
    losses = np.array([objective(dataset, coef[j], t) for j, t in enumerate(grid)])
    model = QuantileModel(coef=coef, taus=grid, method=Method.CJQR, fit_loss=losses,
                          feature_names=dataset.feature_names, response_name=dataset.response_name)
    stats = JointLpStats(n_vars=q * p + 2 * n * q, n_eq=n * q, n_ineq=n * (q - 1),
                         solve_time=elapsed, iterations=sol.iterations)
    return model, stats


def verify_noncrossing(model: QuantileModel, dataset: Dataset, tol: float = 1e-9) -> ViolationReport:
    """Check ``Q_j(x_i) <= Q_{j+1}(x_i) + tol`` for every row and adjacent tau pair."""
    if dataset.p != model.p:
        raise ValidationError(f"model expects {model.p} columns, dataset has {dataset.p}")
    if model.q < 2:
        return ViolationReport(0, 0.0, None, None)
    excess = -np.diff(model.predict_matrix(dataset.x), axis=1)  # Q_j - Q_{j+1}
    bad = excess > tol
    if not bad.any():
        return ViolationReport(0, 0.0, None, None)
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    return ViolationReport(int(bad.sum()), float(excess[i, j]), int(i), (int(j), int(j) + 1))
