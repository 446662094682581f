"""Domain types shared by every estimator, plus CSV ingestion and the bundled reference data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised for malformed input data, tau grids or model files."""


class Method(str, Enum):
    INDEPENDENT = "independent"
    CJQR = "cjqr"
    MQGD = "mqgd"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``x`` (n x p) and response ``y`` (n,).

    When ``intercept`` is set, column 0 of ``x`` is the constant 1.0 column and
    ``feature_names[0] == "(intercept)"``.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    intercept: bool = True
    response_name: str = "y"

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        if x.ndim != 2:
            raise ValidationError(f"design matrix must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValidationError(f"response length {y.shape} does not match {x.shape[0]} rows")
        n, p = x.shape
        if p < 1:
            raise ValidationError("design matrix needs at least one column")
        if n < p:
            raise ValidationError(f"need n >= p, got n={n}, p={p}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("non-finite value in dataset")
        if len(self.feature_names) != p:
            raise ValidationError(f"{len(self.feature_names)} feature names for {p} columns")
        if self.intercept and not np.all(x[:, 0] == 1.0):
            raise ValidationError("intercept flag set but column 0 is not all ones")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        """Feature names as they appear in a CSV (intercept column excluded)."""
        return self.feature_names[1:] if self.intercept else self.feature_names

    @classmethod
    def from_arrays(cls, covariates, y, names=None, intercept=True, response_name="y") -> "Dataset":
        cov = np.asarray(covariates, dtype=np.float64)
        if cov.ndim == 1:
            cov = cov[:, None]
        if names is None:
            names = [f"x{k + 1}" for k in range(cov.shape[1])]
        names = list(names)
        if intercept:
            cov = np.column_stack([np.ones(cov.shape[0]), cov])
            names = ["(intercept)"] + names
        return cls(cov, np.asarray(y, dtype=np.float64), tuple(names), intercept, response_name)


@dataclass(frozen=True)
class TauGrid:
    """Strictly increasing quantile levels, each in (0, 1)."""

    taus: np.ndarray

    def __post_init__(self):
        t = _frozen(np.atleast_1d(self.taus))
        if t.ndim != 1 or t.size == 0:
            raise ValidationError("tau grid must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(t)) or np.any(t <= 0.0) or np.any(t >= 1.0):
            bad = [float(v) for v in t if not (0.0 < v < 1.0)]
            raise ValidationError(f"tau values must lie in (0, 1); offending: {bad}")
        if np.any(np.diff(t) <= 0.0):
            raise ValidationError("tau grid must be strictly increasing without duplicates")
        object.__setattr__(self, "taus", t)

    def __len__(self) -> int:
        return self.taus.shape[0]

    def __iter__(self):
        return iter(self.taus.tolist())

    def __getitem__(self, j):
        return float(self.taus[j])

    def __eq__(self, other):
        return isinstance(other, TauGrid) and np.array_equal(self.taus, other.taus)

    def __hash__(self):
        return hash(self.taus.tobytes())

    @classmethod
    def of(cls, taus) -> "TauGrid":
        return taus if isinstance(taus, TauGrid) else cls(np.asarray(taus, dtype=np.float64))

    @classmethod
    def sgp(cls) -> "TauGrid":
        """The 99-point percentile grid 0.01, 0.02, ..., 0.99."""
        return cls(np.array([k / 100 for k in range(1, 100)]))

    @classmethod
    def parse(cls, spec: str) -> "TauGrid":
        """Parse ``"sgp"`` or a comma separated list such as ``"0.10,0.15"``."""
        spec = spec.strip()
        if spec.lower() == "sgp":
            return cls.sgp()
        try:
            values = [float(tok) for tok in spec.split(",") if tok.strip()]
        except ValueError as exc:
            raise ValidationError(f"cannot parse tau list {spec!r}: {exc}") from None
        return cls(np.array(values))


@dataclass(frozen=True)
class QuantileModel:
    """A fitted q-quantile model: row j of ``coef`` is the coefficient vector for ``taus[j]``.

    Linear models act on the raw design row.  Gradient-trained models with a
    hidden layer carry ``hidden`` (input weights ``w`` of shape h x p and bias
    ``b`` of shape h); their ``coef`` acts on ``[1, softplus(w @ x + b)]``.
    """

    coef: np.ndarray
    taus: TauGrid
    method: Method
    fit_loss: np.ndarray
    feature_names: tuple[str, ...] = ()
    response_name: str = "y"
    hidden: Optional[dict] = None

    def __post_init__(self):
        coef = _frozen(self.coef)
        if coef.ndim != 2 or coef.shape[0] != len(self.taus):
            raise ValidationError(f"coef shape {coef.shape} does not match {len(self.taus)} taus")
        if not np.all(np.isfinite(coef)):
            raise ValidationError("non-finite coefficient")
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "fit_loss", _frozen(self.fit_loss))
        object.__setattr__(self, "method", Method(self.method))
        if self.hidden is not None:
            hidden = {"w": _frozen(self.hidden["w"]), "b": _frozen(self.hidden["b"])}
            if hidden["w"].shape[0] + 1 != coef.shape[1]:
                raise ValidationError("hidden layer width does not match coefficient columns")
            object.__setattr__(self, "hidden", hidden)

    @property
    def q(self) -> int:
        return self.coef.shape[0]

    @property
    def p(self) -> int:
        """Input dimension expected by :func:`predict`."""
        if self.hidden is not None:
            return self.hidden["w"].shape[1]
        return self.coef.shape[1]

    def features(self, x: np.ndarray) -> np.ndarray:
        """Map design rows (n x p) to the rows the coefficient matrix acts on."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.p:
            raise ValidationError(f"expected {self.p} columns, got {x.shape[1]}")
        if self.hidden is None:
            return x
        z = x @ self.hidden["w"].T + self.hidden["b"]
        return np.column_stack([np.ones(x.shape[0]), softplus(z)])

    def predict_matrix(self, x: np.ndarray) -> np.ndarray:
        """Predicted quantiles for many rows at once, shape n x q."""
        return self.features(x) @ self.coef.T

    def __eq__(self, other):
        if not isinstance(other, QuantileModel):
            return NotImplemented
        same_hidden = (self.hidden is None) == (other.hidden is None) and (
            self.hidden is None
            or all(np.array_equal(self.hidden[k], other.hidden[k]) for k in ("w", "b"))
        )
        return (
            np.array_equal(self.coef, other.coef)
            and self.taus == other.taus
            and self.method == other.method
            and np.array_equal(self.fit_loss, other.fit_loss, equal_nan=True)
            and self.feature_names == other.feature_names
            and self.response_name == other.response_name
            and same_hidden
        )

    __hash__ = None


def softplus(z):
    return np.logaddexp(0.0, z)


@dataclass(frozen=True, eq=False)
class QuantileSheet:
    """Predicted quantile values at a single evaluation point."""

    x_star: np.ndarray
    values: np.ndarray
    taus: TauGrid
    isotonized: bool = False

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (len(self.taus),):
            raise ValidationError(f"{values.shape[0]} values for {len(self.taus)} taus")
        if self.isotonized and np.any(np.diff(values) < 0.0):
            raise ValidationError("sheet flagged isotonized but values decrease")
        object.__setattr__(self, "x_star", _frozen(self.x_star))
        object.__setattr__(self, "values", values)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0.0))

    def first_violation(self) -> Optional[tuple[int, int]]:
        bad = np.flatnonzero(np.diff(self.values) < 0.0)
        return (int(bad[0]), int(bad[0]) + 1) if bad.size else None


@dataclass(frozen=True)
class SgpScore:
    """Interpolated percentile for one student.

    ``bracket`` is the knot index pair ``(k, k + 1)`` that contains ``y*``, or
    ``("below", 0)`` / ``("above", q - 1)`` when the score was clamped.
    """

    tau_hat: float
    bracket: tuple
    clamped: bool

    @property
    def sgp(self) -> int:
        """Conventional integer growth percentile in 1..99."""
        return min(99, max(1, int(math.floor(100.0 * self.tau_hat + 0.5))))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ValidationError(f"{path}: duplicate column names in header")
    body = rows[1:]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
    return header, body


def _parse_cell(cell: str, path, lineno: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ValidationError(f"{path}:{lineno}: non-numeric value {cell!r} in column {column!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"{path}:{lineno}: non-finite value {cell!r} in column {column!r}")
    return v


def numeric_columns(path, header, body, columns: Sequence[str]) -> np.ndarray:
    """Extract named columns as a float matrix (len(body) x len(columns))."""
    idx = []
    for c in columns:
        if c not in header:
            raise ValidationError(f"{path}: missing column {c!r} (have {header})")
        idx.append(header.index(c))
    out = np.empty((len(body), len(columns)))
    for i, r in enumerate(body):
        for k, j in enumerate(idx):
            out[i, k] = _parse_cell(r[j].strip(), path, i + 2, columns[k])
    return out


def load_csv(path, response_column: str, intercept: bool = True,
             covariates: Optional[Sequence[str]] = None) -> Dataset:
    """Load a dataset; every column other than ``response_column`` is a covariate
    unless ``covariates`` names them explicitly."""
    header, body = read_table(path)
    if response_column not in header:
        raise ValidationError(f"{path}: missing response column {response_column!r}")
    if covariates is None:
        covariates = [h for h in header if h != response_column]
    if not covariates and not intercept:
        raise ValidationError(f"{path}: no covariate columns")
    values = numeric_columns(path, header, body, list(covariates) + [response_column])
    try:
        return Dataset.from_arrays(values[:, :-1], values[:, -1], names=list(covariates),
                                   intercept=intercept, response_name=response_column)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_csv(dataset: Dataset, path) -> None:
    names = list(dataset.covariate_names) + [dataset.response_name]
    cov = dataset.x[:, 1:] if dataset.intercept else dataset.x
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row, yv in zip(cov, dataset.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yv))])


# ---------------------------------------------------------------------------
# Bundled reference data
# ---------------------------------------------------------------------------

_REFERENCE_X = (
    0.2095, 0.6809, 1.2936, 1.8535, 2.3583, 2.4368, 2.8754, 4.1162, 4.5670, 4.7146,
    4.8946, 4.9042, 5.8864, 6.2050, 6.3962, 7.5324, 7.7828, 8.4835, 9.4854, 9.9582,
)
_REFERENCE_Y = (
    1.7727, 2.5299, 2.0010, 2.1010, 2.4940, 2.1642, 2.4477, 2.5742, 4.3145, 1.5696,
    2.4680, 2.1534, 1.9251, 1.6796, 4.5568, 3.5100, 3.5223, 3.0996, 0.3689, 3.0694,
)

# Published coefficient rows (tau=0.10 then tau=0.15) for the reference data.
# Kept as literature values; they are not the LP optima of the data above.
REFERENCE_TAUS = (0.10, 0.15)
REFERENCE_COEFFICIENTS = {
    Method.INDEPENDENT: ((2.1010, -0.0789), (1.6796, 0.0453)),
    Method.CJQR: ((1.7727, 0.0000), (1.7727, 0.0000)),
    Method.MQGD: ((1.8445, -0.0127), (1.9084, -0.0022)),
}
REFERENCE_CROSSING_CLAIM = 5.08


def reference_dataset() -> Dataset:
    """The bundled 20-observation reference dataset (prior score X, current score Y) with intercept."""
    return Dataset.from_arrays(np.array(_REFERENCE_X), np.array(_REFERENCE_Y), names=["X"],
                               intercept=True, response_name="Y")


def reference_model(method: Method) -> QuantileModel:
    """A model holding the published reference coefficients for ``method``."""
    method = Method(method)
    return QuantileModel(
        coef=np.array(REFERENCE_COEFFICIENTS[method]),
        taus=TauGrid.of(REFERENCE_TAUS),
        method=method,
        fit_loss=np.full(2, np.nan),
        feature_names=("(intercept)", "X"),
        response_name="Y",
    )
