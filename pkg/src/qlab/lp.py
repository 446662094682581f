"""Dense-tableau primal simplex for equality-form linear programs.

Problems are ``min c @ x  s.t.  A x = b`` with each variable either ``x >= 0``
or free (lower bound ``-inf``).  Free variables are split internally into a
difference of two non-negative columns.  Pricing is Dantzig's most-negative
reduced cost until ``3 * (rows + cols)`` consecutive degenerate pivots have
been taken, after which Bland's smallest-index rule is used for the rest of
the solve.  Ratio-test ties always go to the basic variable with the smallest
index, so the pivot sequence is a deterministic function of the input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-9


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    cost: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lower_bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=np.float64)
        a = np.asarray(self.a_eq, dtype=np.float64)
        b = np.asarray(self.b_eq, dtype=np.float64)
        if a.ndim != 2 or c.shape != (a.shape[1],) or b.shape != (a.shape[0],):
            raise ValueError(f"inconsistent LP shapes: cost {c.shape}, a_eq {a.shape}, b_eq {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("LP data must be finite")
        lb = np.zeros(c.shape) if self.lower_bounds is None else np.asarray(self.lower_bounds, dtype=np.float64)
        if lb.shape != c.shape or not np.all((lb == 0.0) | (lb == -np.inf)):
            raise ValueError("lower bounds must be 0 or -inf")
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "a_eq", a)
        object.__setattr__(self, "b_eq", b)
        object.__setattr__(self, "lower_bounds", lb)

    @property
    def shape(self) -> tuple[int, int]:
        return self.a_eq.shape

    @property
    def free(self) -> np.ndarray:
        return self.lower_bounds == -np.inf


@dataclass
class SolverOptions:
    pivot_rule: str = "dantzig"  # "dantzig" (Bland fallback on stalling) or "bland"
    max_iter: Optional[int] = None  # default 50 * (rows + cols)
    tol: float = PIVOT_TOL
    record_pivots: bool = False


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray
    objective: float
    status: LpStatus
    iterations: int
    basis: Optional[tuple] = None
    duals: Optional[np.ndarray] = None
    pivots: Optional[tuple] = None
    bland_engaged: bool = False

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _State:
    max_iter: int
    bland_after: int
    tol: float
    bland: bool = False
    iterations: int = 0
    degenerate: int = 0
    pivots: Optional[list] = None


def _run(T, basis, n_price, st: _State) -> LpStatus:
    while True:
        if st.iterations >= st.max_iter:
            return LpStatus.ITERATION_LIMIT
        d = T[-1, :n_price]
        if st.bland:
            cand = np.flatnonzero(d < -st.tol)
            if cand.size == 0:
                return LpStatus.OPTIMAL
            c = int(cand[0])
        else:
            c = int(np.argmin(d))
            if d[c] >= -st.tol:
                return LpStatus.OPTIMAL
        r, theta = kernels.ratio_test(T, c, basis, st.tol)
        if r < 0:
            return LpStatus.UNBOUNDED
        if st.pivots is not None:
            st.pivots.append((c, int(basis[r])))
        kernels.pivot(T, r, c)
        basis[r] = c
        st.iterations += 1
        if theta <= st.tol:
            st.degenerate += 1
            if not st.bland and st.degenerate >= st.bland_after:
                log.debug("switching to Bland's rule after %d degenerate pivots", st.degenerate)
                st.bland = True
        else:
            st.degenerate = 0


def _crash_basis(A: np.ndarray) -> np.ndarray:
    """For each row, the lowest-index singleton column with a positive entry there (-1 if none)."""
    m, n = A.shape
    nz = A != 0.0
    singleton = np.flatnonzero(nz.sum(axis=0) == 1)
    chosen = np.full(m, -1, dtype=np.intp)
    if singleton.size:
        rows = np.argmax(nz[:, singleton], axis=0)
        for k, r in zip(singleton, rows):
            if chosen[r] < 0 and A[r, k] > 0.0:
                chosen[r] = k
    return chosen


def solve(lp: LinearProgram, opts: Optional[SolverOptions] = None) -> LpSolution:
    opts = opts or SolverOptions()
    r0, m0 = lp.shape
    max_iter = opts.max_iter if opts.max_iter is not None else 50 * (r0 + m0)
    st = _State(max_iter=max_iter, bland_after=3 * (r0 + m0), tol=opts.tol,
                bland=opts.pivot_rule == "bland", pivots=[] if opts.record_pivots else None)

    # Internal standard form: all columns >= 0, free columns get a negated twin appended.
    free_idx = np.flatnonzero(lp.free)
    A = np.hstack([lp.a_eq, -lp.a_eq[:, free_idx]])
    c = np.concatenate([lp.cost, -lp.cost[free_idx]])
    b = lp.b_eq.copy()
    n_int = A.shape[1]

    def finish(status, x_int=None, basis=None, duals=None):
        if x_int is None:
            x = np.full(m0, np.nan)
            obj = np.nan
        else:
            x = x_int[:m0].copy()
            x[free_idx] -= x_int[m0:]
            obj = float(lp.cost @ x)
        return LpSolution(
            x=x, objective=obj, status=status, iterations=st.iterations,
            basis=None if basis is None else tuple(int(k) for k in basis),
            duals=duals, pivots=None if st.pivots is None else tuple(st.pivots),
            bland_engaged=st.bland,
        )

    # Preprocess: all-zero rows are redundant or infeasible; flip rows so b >= 0.
    zero_rows = ~np.any(A != 0.0, axis=1)
    if np.any(np.abs(b[zero_rows]) > opts.tol):
        return finish(LpStatus.INFEASIBLE)
    keep = np.flatnonzero(~zero_rows)
    sign = np.where(b < 0.0, -1.0, 1.0)
    A = A[keep] * sign[keep, None]
    b = b[keep] * sign[keep]
    m = A.shape[0]

    crash = _crash_basis(A)
    art_rows = np.flatnonzero(crash < 0)
    n_art = art_rows.size
    N = n_int + n_art

    T = np.zeros((m + 1, N + 1))
    T[:m, :n_int] = A
    T[:m, -1] = b
    basis = np.empty(m, dtype=np.intp)
    for r in range(m):
        k = crash[r]
        if k >= 0:
            T[r] /= A[r, k]
            basis[r] = k
    for a, r in enumerate(art_rows):
        T[r, n_int + a] = 1.0
        basis[r] = n_int + a

    if n_art:
        T[-1] = -T[art_rows].sum(axis=0)
        T[-1, n_int:N] = 0.0
        status = _run(T, basis, N, st)
        if status is LpStatus.ITERATION_LIMIT:
            return finish(status)
        infeas = -T[-1, -1]
        if infeas > opts.tol * max(1.0, float(np.max(np.abs(b), initial=0.0))):
            return finish(LpStatus.INFEASIBLE)
        # Drive artificials out of the basis; rows where that is impossible are redundant.
        redundant = []
        for r in range(m):
            if basis[r] >= n_int:
                row = np.abs(T[r, :n_int])
                k = int(np.argmax(row))
                if row[k] > opts.tol:
                    kernels.pivot(T, r, k)
                    basis[r] = k
                else:
                    redundant.append(r)
        if redundant:
            keep_rows = np.setdiff1d(np.arange(m), redundant)
            T = T[np.concatenate([keep_rows, [m]])]
            basis = basis[keep_rows]
            keep = keep[keep_rows]
            A = A[keep_rows]
            b = b[keep_rows]
            m = keep_rows.size
        T = np.ascontiguousarray(np.delete(T, np.s_[n_int:N], axis=1))
        basis = np.ascontiguousarray(basis)

    cb = c[basis]
    T[-1, :n_int] = c - cb @ T[:m, :n_int]
    T[-1, -1] = -float(cb @ T[:m, -1])
    status = _run(T, basis, n_int, st)
    if status is not LpStatus.OPTIMAL:
        return finish(status)

    # Re-solve the final basis against the original data to shed tableau round-off.
    x_int = np.zeros(n_int)
    x_int[basis] = T[:m, -1]
    duals = None
    B = A[:, basis]
    cb = c[basis]
    try:
        xb = np.linalg.solve(B, b)
        y_norm = np.linalg.solve(B.T, cb)
    except np.linalg.LinAlgError:
        log.debug("final basis numerically singular; keeping tableau values")
    else:
        if np.max(np.abs(xb - x_int[basis]), initial=0.0) < 1e-6 * (1.0 + np.max(np.abs(xb), initial=0.0)):
            x_int[basis] = xb
        duals = np.zeros(r0)
        duals[keep] = y_norm * sign[keep]
    x_int[(x_int < 0.0) & (x_int > -1e-9)] = 0.0
    return finish(LpStatus.OPTIMAL, x_int, basis, duals)


def dual_bound(lp: LinearProgram, sol: LpSolution, tol: float = 1e-9) -> Optional[float]:
    """Dual objective ``b @ y`` of the solution's duals if they are dual feasible, else None.

    A feasible dual gives a lower bound on every primal objective value.
    """
    if sol.duals is None:
        return None
    y = sol.duals
    reduced = lp.cost - lp.a_eq.T @ y
    scale = 1.0 + float(np.max(np.abs(lp.cost), initial=0.0))
    free = lp.free
    if np.any(reduced[~free] < -tol * scale) or np.any(np.abs(reduced[free]) > tol * scale):
        return None
    return float(lp.b_eq @ y)


def residual_norm(lp: LinearProgram, x: np.ndarray) -> float:
    return float(np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0))
