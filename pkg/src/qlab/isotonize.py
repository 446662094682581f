"""Post-hoc monotonization of quantile sheets and the coverage diagnostic it distorts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import Dataset, QuantileModel, QuantileSheet, TauGrid, ValidationError

CORRECTIONS = ("none", "rearrange", "pav")


def rearrange(sheet: QuantileSheet) -> QuantileSheet:
    """Monotone rearrangement: sort the predicted quantile values ascending."""
    return QuantileSheet(sheet.x_star, np.sort(sheet.values, kind="stable"), sheet.taus, isotonized=True)


def pav_project(sheet: QuantileSheet, weights=None) -> QuantileSheet:
    """Weighted least-squares projection onto non-decreasing vectors."""
    q = len(sheet.taus)
    w = np.ones(q) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (q,):
        raise ValidationError(f"{w.shape[0]} weights for {q} values")
    if not np.all(w > 0.0) or not np.all(np.isfinite(w)):
        raise ValidationError("PAV weights must be positive and finite")
    fitted = kernels.pav(np.ascontiguousarray(sheet.values), np.ascontiguousarray(w))
    # pooled blocks can differ in the last ulp; the cone constraint must hold exactly
    fitted = np.maximum.accumulate(fitted)
    return QuantileSheet(sheet.x_star, fitted, sheet.taus, isotonized=True)


def correct(sheet: QuantileSheet, method: str) -> QuantileSheet:
    if method == "none":
        return sheet
    if method == "rearrange":
        return rearrange(sheet)
    if method == "pav":
        return pav_project(sheet)
    raise ValidationError(f"unknown correction {method!r}; choose from {CORRECTIONS}")


def correct_matrix(values: np.ndarray, method: str) -> np.ndarray:
    """Row-wise correction of an n x q matrix of predicted quantiles."""
    if method == "none":
        return values
    if method == "rearrange":
        return np.sort(values, axis=1, kind="stable")
    if method == "pav":
        w = np.ones(values.shape[1])
        out = np.empty_like(values)
        for i, row in enumerate(values):
            out[i] = np.maximum.accumulate(kernels.pav(np.ascontiguousarray(row), w))
        return out
    raise ValidationError(f"unknown correction {method!r}; choose from {CORRECTIONS}")


@dataclass(frozen=True)
class CoverageRow:
    tau: float
    coverage_before: float
    coverage_after: float
    gap_before: float
    gap_after: float


@dataclass(frozen=True)
class CoverageTable:
    method: str
    n: int
    rows: tuple[CoverageRow, ...]

    def as_dicts(self) -> list[dict]:
        return [r.__dict__.copy() for r in self.rows]


def quantile_property_gap(model: QuantileModel, dataset: Dataset, taus=None, method: str = "rearrange",
                          atol: float = 1e-9) -> CoverageTable:
    """Empirical coverage ``#{i: y_i <= Q_j(x_i)} / n`` per tau, before and after correction.

    A point within ``atol`` of its fitted quantile counts as at-or-below.
    """
    if method not in CORRECTIONS:
        raise ValidationError(f"unknown correction {method!r}; choose from {CORRECTIONS}")
    grid = model.taus if taus is None else TauGrid.of(taus)
    if grid != model.taus:
        raise ValidationError("tau grid does not match the model's grid")
    raw = model.predict_matrix(dataset.x)
    fixed = correct_matrix(raw, method)
    y = dataset.y[:, None]
    before = np.mean(y <= raw + atol, axis=0)
    after = np.mean(y <= fixed + atol, axis=0)
    rows = tuple(
        CoverageRow(float(t), float(b), float(a), float(abs(b - t)), float(abs(a - t)))
        for t, b, a in zip(grid, before, after)
    )
    return CoverageTable(method, dataset.n, rows)
