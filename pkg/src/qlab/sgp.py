"""Growth-percentile assignment by interpolating between adjacent predicted quantiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import QuantileModel, QuantileSheet, SgpScore, TauGrid, ValidationError
from .isotonize import correct

POLICIES = ("require-monotone", "rearrange", "pav")


class CrossingError(ValueError):
    """Interpolation was requested on a sheet whose quantiles cross."""

    def __init__(self, pair: tuple[int, int], values: tuple[float, float]):
        super().__init__(f"quantile crossing between knots {pair[0]} and {pair[1]}: "
                         f"{values[0]:.6g} > {values[1]:.6g}")
        self.pair = pair
        self.values = values


def parse_policy(policy: str) -> str:
    """Accepts ``require-monotone``, ``rearrange``, ``pav`` or ``auto-isotonize(<method>)``."""
    p = policy.strip().lower()
    if p.startswith("auto-isotonize"):
        inner = p[len("auto-isotonize"):].strip("() ") or "rearrange"
        p = inner
    if p not in POLICIES:
        raise ValidationError(f"unknown policy {policy!r}; choose from {POLICIES}")
    return p


def _interpolate(values: np.ndarray, taus: np.ndarray, y_star: float) -> SgpScore:
    q = values.shape[0]
    if y_star < values[0]:
        return SgpScore(float(taus[0]), ("below", 0), True)
    if y_star > values[-1]:
        return SgpScore(float(taus[-1]), ("above", q - 1), True)
    for k in range(q - 1):
        lo, hi = values[k], values[k + 1]
        if lo <= y_star <= hi:
            if hi == lo:
                return SgpScore(float(taus[k]), (k, k + 1), False)
            frac = (y_star - lo) / (hi - lo)
            return SgpScore(float(taus[k] + (taus[k + 1] - taus[k]) * frac), (k, k + 1), False)
    raise AssertionError("monotone sheet without a bracket")  # unreachable for monotone input


def assign_sgp(sheet: QuantileSheet, y_star: float, policy: str = "require-monotone") -> SgpScore:
    """Percentile of ``y_star`` on the sheet, clamped to ``[tau_1, tau_q]`` outside the knot span.

    The lowest bracket ``k`` with ``values[k] <= y* <= values[k+1]`` is used; if
    both knots equal ``y*`` the score is ``tau_k``.
    """
    if len(sheet.taus) < 2:
        raise ValidationError("interpolation needs at least two quantile knots")
    policy = parse_policy(policy)
    if policy == "require-monotone":
        if not sheet.isotonized and not sheet.is_monotone():
            pair = sheet.first_violation()
            raise CrossingError(pair, (float(sheet.values[pair[0]]), float(sheet.values[pair[1]])))
    elif not sheet.isotonized:
        sheet = correct(sheet, policy)
    return _interpolate(sheet.values, sheet.taus.taus, float(y_star))


@dataclass(frozen=True)
class StudentResult:
    student_id: str
    score: Optional[SgpScore]
    crossed_before_correction: bool
    max_violation: float
    error: Optional[str] = None


@dataclass(frozen=True)
class BatchSummary:
    n: int
    policy: str
    crossing_count: int
    crossing_frequency: float
    max_violation: float
    crossing_errors: int
    clamped: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sgp_batch(model: QuantileModel, x, y, policy: str = "rearrange",
              ids: Optional[Sequence[str]] = None) -> tuple[list[StudentResult], BatchSummary]:
    """Score every student; crossing frequency and magnitude are measured on the raw sheets."""
    policy = parse_policy(policy)
    x = np.asarray(x, dtype=np.float64).reshape(-1, model.p)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise ValidationError("x and y disagree on the number of students")
    if ids is None:
        ids = [str(i + 1) for i in range(x.shape[0])]
    raw = model.predict_matrix(x) if x.shape[0] else np.empty((0, model.q))
    excess = raw[:, :-1] - raw[:, 1:] if model.q > 1 else np.zeros((x.shape[0], 0))
    results = []
    for i in range(x.shape[0]):
        worst = float(max(excess[i].max(initial=0.0), 0.0))
        crossed = worst > 0.0
        sheet = QuantileSheet(x[i], raw[i], model.taus)
        try:
            score = assign_sgp(sheet, y[i], policy)
        except CrossingError as exc:
            results.append(StudentResult(str(ids[i]), None, crossed, worst, str(exc)))
            continue
        results.append(StudentResult(str(ids[i]), score, crossed, worst))
    n = len(results)
    n_crossed = sum(r.crossed_before_correction for r in results)
    summary = BatchSummary(
        n=n,
        policy=policy,
        crossing_count=n_crossed,
        crossing_frequency=n_crossed / n if n else 0.0,
        max_violation=max((r.max_violation for r in results), default=0.0),
        crossing_errors=sum(r.error is not None for r in results),
        clamped=sum(r.score is not None and r.score.clamped for r in results),
    )
    return results, summary


@dataclass(frozen=True)
class Roundtrip:
    discrepancy: float
    degenerate: bool


def percentile_roundtrip(model: QuantileModel, x_star, taus=None, policy: str = "rearrange") -> Roundtrip:
    """Worst ``|assign_sgp(Q(tau_j | x*)) - tau_j|`` over the grid.

    ``degenerate`` flags sheets with repeated knots, where the round trip
    cannot be exact.
    """
    from .qr import predict

    if taus is not None and TauGrid.of(taus) != model.taus:
        raise ValidationError("tau grid does not match the model's grid")
    sheet = predict(model, x_star)
    policy = parse_policy(policy)
    if policy != "require-monotone":
        sheet = correct(sheet, policy)
    worst = 0.0
    for j, t in enumerate(sheet.taus):
        s = assign_sgp(sheet, float(sheet.values[j]), "require-monotone")
        worst = max(worst, abs(s.tau_hat - t))
    degenerate = bool(np.any(np.diff(sheet.values) == 0.0))
    return Roundtrip(worst, degenerate)
