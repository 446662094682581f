"""Gradient-trained multi-output quantile regression on the composite pinball loss.

The model has one output head per tau.  With ``hidden_units=0`` each head is a
linear function of the design row; otherwise a single softplus hidden layer is
shared by all heads.  Training is full batch.  The default optimizer is L-BFGS
with a monotone backtracking (Armijo) line search, so accepted iterates never
increase the training objective.  Training stops when the objective has not
improved by ``min_improvement`` for ``patience`` consecutive iterations, when
the subgradient is below ``grad_tol``, or after ``max_iters`` iterations.

The training objective is the composite pinball loss plus an optional hinge
penalty ``crossing_penalty / n * sum max(0, f_j(z) - f_{j+1}(z))`` over a set of
monitor points ``z``: the training rows and the corners of the covariate
bounding box widened by ``monitor_margin`` of its range on each side.  With a
linear model and no penalty the heads decouple and each converges towards its
own (possibly crossing) independent fit.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .core import Dataset, Method, QuantileModel, TauGrid, ValidationError

log = logging.getLogger(__name__)


class Optimizer(str, Enum):
    QUASI_NEWTON = "quasi_newton"
    FIRST_ORDER = "first_order"


class StopReason(str, Enum):
    PLATEAU = "plateau"
    MAX_ITERS = "max_iters"
    GRADIENT_TOLERANCE = "gradient_tolerance"


class TrainingError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class MqgdConfig:
    hidden_units: int = 0
    max_iters: int = 10_000
    patience: int = 500
    min_improvement: float = 1e-8
    seed: int = 42
    optimizer: Optimizer = Optimizer.QUASI_NEWTON
    learning_rate: float = 0.01
    history: int = 100
    grad_tol: float = 1e-7
    crossing_penalty: float = 1.0
    monitor_margin: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.hidden_units < 0:
            raise ValidationError("hidden_units must be >= 0")
        if self.max_iters < 1 or self.patience < 1:
            raise ValidationError("max_iters and patience must be positive")
        if not self.learning_rate > 0.0:
            raise ValidationError("learning_rate must be > 0")
        if self.crossing_penalty < 0.0 or self.monitor_margin < 0.0:
            raise ValidationError("crossing_penalty and monitor_margin must be >= 0")
        if self.history < 1:
            raise ValidationError("history must be >= 1")

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["optimizer"] = self.optimizer.value
        return d


@dataclass
class TrainingTrace:
    loss_history: list = field(default_factory=list)
    stopped_at: int = 0
    stop_reason: StopReason = StopReason.MAX_ITERS
    evaluations: int = 0
    final_composite: float = math.nan

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss"])
            for k, v in enumerate(self.loss_history):
                w.writerow([k, repr(float(v))])


# ---------------------------------------------------------------------------
# Network parameterisation
# ---------------------------------------------------------------------------


@dataclass
class _Shapes:
    p: int
    q: int
    h: int

    @property
    def size(self) -> int:
        if self.h == 0:
            return self.q * self.p
        return self.h * self.p + self.h + self.q * (self.h + 1)

    def unpack(self, theta):
        if self.h == 0:
            return None, None, theta.reshape(self.q, self.p)
        h, p, q = self.h, self.p, self.q
        w1 = theta[: h * p].reshape(h, p)
        b1 = theta[h * p: h * p + h]
        v = theta[h * p + h:].reshape(q, h + 1)
        return w1, b1, v


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _forward(shapes: _Shapes, theta, inputs):
    w1, b1, v = shapes.unpack(theta)
    if w1 is None:
        return inputs @ v.T, None
    z = inputs @ w1.T + b1
    phi = np.column_stack([np.ones(inputs.shape[0]), np.logaddexp(0.0, z)])
    return phi @ v.T, (z, phi)


def _backward(shapes: _Shapes, theta, inputs, cache, d_out):
    """Gradient of ``sum(d_out * outputs)`` with respect to theta."""
    w1, b1, v = shapes.unpack(theta)
    if w1 is None:
        return (d_out.T @ inputs).ravel()
    z, phi = cache
    g_v = d_out.T @ phi
    d_z = (d_out @ v)[:, 1:] * _sigmoid(z)
    return np.concatenate([(d_z.T @ inputs).ravel(), d_z.sum(axis=0), g_v.ravel()])


def _init_params(shapes: _Shapes, seed: int) -> np.ndarray:
    """Scaled-uniform draw from ``seed``; every output head starts from the same weights."""
    rng = np.random.default_rng(seed)
    if shapes.h == 0:
        bound = 1.0 / math.sqrt(shapes.p)
        head = rng.uniform(-bound, bound, shapes.p)
        return np.tile(head, shapes.q)
    h, p = shapes.h, shapes.p
    bound_in = 1.0 / math.sqrt(p)
    w1 = rng.uniform(-bound_in, bound_in, (h, p))
    b1 = rng.uniform(-bound_in, bound_in, h)
    bound_out = 1.0 / math.sqrt(h + 1)
    head = rng.uniform(-bound_out, bound_out, h + 1)
    return np.concatenate([w1.ravel(), b1, np.tile(head, shapes.q)])


def monitor_points(dataset: Dataset, margin: float) -> np.ndarray:
    """Training rows plus the corners of the widened covariate box (at most 2**10 corners)."""
    x = dataset.x
    cov = x[:, 1:] if dataset.intercept else x
    k = cov.shape[1]
    if k == 0 or k > 10:
        return x.copy()
    lo, hi = cov.min(axis=0), cov.max(axis=0)
    pad = margin * (hi - lo)
    corners = np.array(list(itertools.product(*zip(lo - pad, hi + pad))))
    if dataset.intercept:
        corners = np.column_stack([np.ones(corners.shape[0]), corners])
    return np.vstack([x, corners])


class _Objective:
    def __init__(self, dataset: Dataset, taus: np.ndarray, shapes: _Shapes,
                 penalty: float = 0.0, monitor: Optional[np.ndarray] = None):
        self.x = np.ascontiguousarray(dataset.x)
        self.y = dataset.y
        self.taus = np.ascontiguousarray(taus)
        self.shapes = shapes
        self.n = dataset.n
        self.penalty = penalty
        self.monitor = monitor if penalty > 0.0 and monitor is not None and shapes.q > 1 else None
        self.inputs = self.x if self.monitor is None else np.vstack([self.x, self.monitor])
        self.evaluations = 0

    def composite(self, theta) -> float:
        out, _ = _forward(self.shapes, theta, self.x)
        total, _ = kernels.pinball_terms(np.ascontiguousarray(self.y[:, None] - out), self.taus)
        return total / self.n

    def __call__(self, theta):
        self.evaluations += 1
        out, cache = _forward(self.shapes, theta, self.inputs)
        n = self.n
        resid = np.ascontiguousarray(self.y[:, None] - out[:n])
        total, psi = kernels.pinball_terms(resid, self.taus)
        loss = total / n
        d_out = np.zeros_like(out)
        d_out[:n] = -psi / n
        if self.monitor is not None:
            pm = out[n:]
            excess = pm[:, :-1] - pm[:, 1:]
            active = excess > 0.0
            scale = self.penalty / n
            loss += scale * float(np.sum(excess[active]))
            a = active * scale
            d_out[n:, :-1] += a
            d_out[n:, 1:] -= a
        return loss, _backward(self.shapes, theta, self.inputs, cache, d_out)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def _as_linear_params(params, dataset: Dataset, q: int) -> np.ndarray:
    if isinstance(params, QuantileModel):
        if params.hidden is not None:
            raise ValidationError("pass the model itself to composite_loss for hidden-layer models")
        params = params.coef
    w = np.asarray(params, dtype=np.float64)
    if w.shape != (q, dataset.p):
        raise ValidationError(f"params shape {w.shape}, expected ({q}, {dataset.p})")
    return w


def _model_shapes_theta(params, dataset: Dataset, q: int):
    if isinstance(params, QuantileModel) and params.hidden is not None:
        if params.p != dataset.p or params.q != q:
            raise ValidationError("model dimensions do not match dataset / taus")
        w1, b1 = params.hidden["w"], params.hidden["b"]
        shapes = _Shapes(dataset.p, q, w1.shape[0])
        return shapes, np.concatenate([w1.ravel(), b1, params.coef.ravel()])
    w = _as_linear_params(params, dataset, q)
    return _Shapes(dataset.p, q, 0), w.ravel().copy()


def composite_loss(params, dataset: Dataset, taus) -> float:
    """Mean over rows of the summed pinball losses across all taus."""
    grid = TauGrid.of(taus)
    shapes, theta = _model_shapes_theta(params, dataset, len(grid))
    return _Objective(dataset, grid.taus, shapes).composite(theta)


def subgradient(params, dataset: Dataset, taus):
    """A subgradient of :func:`composite_loss`; a zero residual takes slope ``tau``.

    Returns a q x p array for linear parameters, or a dict with keys ``w``,
    ``b`` and ``coef`` for a hidden-layer model.
    """
    grid = TauGrid.of(taus)
    shapes, theta = _model_shapes_theta(params, dataset, len(grid))
    _, g = _Objective(dataset, grid.taus, shapes)(theta)
    w1, b1, v = shapes.unpack(g)
    if w1 is None:
        return v.copy()
    return {"w": w1.copy(), "b": b1.copy(), "coef": v.copy()}


def crossing_rate(model: QuantileModel, x_grid, tol: float = 1e-9) -> float:
    grid = np.atleast_2d(np.asarray(x_grid, dtype=np.float64))
    if grid.shape[0] == 0:
        raise ValidationError("crossing_rate needs a non-empty grid")
    if model.q < 2:
        return 0.0
    pred = model.predict_matrix(grid)
    crossed = np.any(pred[:, :-1] - pred[:, 1:] > tol, axis=1)
    return float(np.mean(crossed))


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


class _Plateau:
    def __init__(self, cfg: MqgdConfig, initial: float):
        self.cfg = cfg
        self.best = initial
        self.stale = 0

    def update(self, loss: float) -> bool:
        if loss < self.best - self.cfg.min_improvement:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.cfg.patience


def _check_finite(loss, trace):
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite training loss at iteration {trace.stopped_at}", trace)


def _train_lbfgs(obj: _Objective, theta, cfg: MqgdConfig, trace: TrainingTrace):
    loss, g = obj(theta)
    _check_finite(loss, trace)
    trace.loss_history.append(loss)
    plateau = _Plateau(cfg, loss)
    s_hist, y_hist = [], []
    for it in range(1, cfg.max_iters + 1):
        trace.stopped_at = it
        if np.max(np.abs(g)) <= cfg.grad_tol:
            trace.stopped_at = it - 1
            trace.stop_reason = StopReason.GRADIENT_TOLERANCE
            return theta
        d = _two_loop(g, s_hist, y_hist)
        slope = g @ d
        if not s_hist or slope >= 0.0:
            s_hist, y_hist = [], []
            d = -g
            slope = g @ d
        step = 1.0 if s_hist else min(1.0, 1.0 / max(np.abs(g).sum(), 1e-300))
        accepted = False
        for _ in range(60):
            cand = theta + step * d
            c_loss, c_g = obj(cand)
            if math.isfinite(c_loss) and c_loss <= loss + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if accepted:
            s, yv = cand - theta, c_g - g
            if s @ yv > 1e-12 * (s @ s):
                s_hist.append(s)
                y_hist.append(yv)
                if len(s_hist) > cfg.history:
                    s_hist.pop(0)
                    y_hist.pop(0)
            theta, loss, g = cand, c_loss, c_g
        elif not s_hist:
            # steepest descent failed from an unchanged state: every later
            # iteration would repeat it exactly, so run the plateau out now
            while True:
                trace.loss_history.append(loss)
                if plateau.update(loss) or trace.stopped_at >= cfg.max_iters:
                    break
                trace.stopped_at += 1
            trace.stop_reason = (StopReason.PLATEAU if plateau.stale >= cfg.patience
                                 else StopReason.MAX_ITERS)
            return theta
        else:
            s_hist, y_hist = [], []
        trace.loss_history.append(loss)
        if plateau.update(loss):
            trace.stop_reason = StopReason.PLATEAU
            return theta
    trace.stop_reason = StopReason.MAX_ITERS
    return theta


def schedule(it: int, total: int, base_lr: float) -> float:
    """Three-phase learning rate: linear warmup from peak/25 to peak (first 30%),
    hold at peak (next 10%), linear decay to peak/1e4 (remaining 60%); peak = 10 * base_lr."""
    peak = 10.0 * base_lr
    frac = it / max(total, 1)
    if frac < 0.3:
        return peak / 25.0 + (peak - peak / 25.0) * frac / 0.3
    if frac < 0.4:
        return peak
    return peak + (peak / 1e4 - peak) * min(1.0, (frac - 0.4) / 0.6)


def _train_adam(obj: _Objective, theta, cfg: MqgdConfig, trace: TrainingTrace):
    loss, g = obj(theta)
    _check_finite(loss, trace)
    trace.loss_history.append(loss)
    plateau = _Plateau(cfg, loss)
    best_theta, best_loss = theta.copy(), loss
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for it in range(1, cfg.max_iters + 1):
        trace.stopped_at = it
        if np.max(np.abs(g)) <= cfg.grad_tol:
            trace.stopped_at = it - 1
            trace.stop_reason = StopReason.GRADIENT_TOLERANCE
            return best_theta
        lr = schedule(it - 1, cfg.max_iters, cfg.learning_rate)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** it)) / (np.sqrt(v / (1 - b2 ** it)) + eps)
        loss, g = obj(theta)
        _check_finite(loss, trace)
        trace.loss_history.append(loss)
        if loss < best_loss:
            best_theta, best_loss = theta.copy(), loss
        if plateau.update(loss):
            trace.stop_reason = StopReason.PLATEAU
            return best_theta
    trace.stop_reason = StopReason.MAX_ITERS
    return best_theta


def fit(dataset: Dataset, taus, config: Optional[MqgdConfig] = None) -> tuple[QuantileModel, TrainingTrace]:
    cfg = config or MqgdConfig()
    grid = TauGrid.of(taus)
    shapes = _Shapes(dataset.p, len(grid), cfg.hidden_units)
    monitor = monitor_points(dataset, cfg.monitor_margin) if cfg.crossing_penalty > 0 else None
    obj = _Objective(dataset, grid.taus, shapes, cfg.crossing_penalty, monitor)
    theta0 = _init_params(shapes, cfg.seed)
    trace = TrainingTrace()
    if cfg.optimizer is Optimizer.QUASI_NEWTON:
        theta = _train_lbfgs(obj, theta0, cfg, trace)
    else:
        theta = _train_adam(obj, theta0, cfg, trace)
    trace.evaluations = obj.evaluations
    trace.final_composite = obj.composite(theta)
    log.debug("mqgd stopped after %d iterations (%s), composite loss %.6g",
              trace.stopped_at, trace.stop_reason.value, trace.final_composite)
    w1, b1, v = shapes.unpack(theta)
    out, _ = _forward(shapes, theta, dataset.x)
    resid = dataset.y[:, None] - out
    per_tau = np.sum(resid * (grid.taus[None, :] - (resid < 0.0)), axis=0)
    model = QuantileModel(
        coef=v.copy(), taus=grid, method=Method.MQGD, fit_loss=per_tau,
        feature_names=dataset.feature_names, response_name=dataset.response_name,
        hidden=None if w1 is None else {"w": w1.copy(), "b": b1.copy()},
    )
    return model, trace
