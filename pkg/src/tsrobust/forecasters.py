"""Reference forecasters with exact input gradients, training, checkpoints.

Three in-repo model families cover the capability matrix:

* ``SeasonalNaive``: repeats the last observed season; predict-only.
* ``LinearAR``: autoregressive model applied recursively over the horizon;
  closed-form ridge fitting and an exact input Jacobian.
* ``MLPForecaster``: one hidden tanh layer over a per-window standardized
  context, with optional quantile heads for distributional output.  All
  gradients (parameters and inputs) are derived by hand, including the
  paths through the window mean and the floored standard deviation used
  for de-standardization.

Models are immutable; ``fit`` and the hardening routines return new
instances.  Checkpoints are versioned JSON with every 64-bit float stored
as its shortest round-trip decimal string, so save/load is bit-exact.
"""

from __future__ import annotations

import abc
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    InvalidInput,
    IoError,
    NoGradientCapability,
    NoLatentCapability,
    NotTrainable,
)
from .metrics import ForecastDistribution, quantile_ensemble
from .series import Direction, LossKind, Window, _check_vector, _freeze

__all__ = [
    "Capabilities",
    "ForecastModel",
    "SeasonalNaive",
    "LinearAR",
    "MLPForecaster",
    "TrainConfig",
    "fit",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint",
    "checkpoint_dict",
    "model_from_checkpoint_dict",
]

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Capabilities:
    """What a model can answer beyond plain point prediction."""

    gradient: bool = False
    latent: bool = False
    trainable: bool = False
    distributional: bool = False


class ForecastModel(abc.ABC):
    """Contract every forecaster (local or bridged) fulfills.

    ``predict`` must be deterministic given the window and seed.  Optional
    capabilities are advertised through :attr:`capabilities`; calling an
    unsupported operation raises the matching capability error without side
    effects.
    """

    model_id: str = "model"
    input_len: int | None = None  # fixed context length, when the model has one
    min_input_len: int = 1
    horizon_len: int | None = None  # fixed horizon, when the model has one

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities()

    @abc.abstractmethod
    def predict(self, window: Window, seed: int | None = None) -> ForecastDistribution:
        """Forecast ``window.horizon`` steps from ``window.context``."""

    def input_gradient(
        self, window: Window, reference, loss_kind: LossKind, direction: Direction
    ) -> np.ndarray:
        raise NoGradientCapability(f"{self.model_id} does not expose input gradients")

    def latent_split(self) -> tuple[Callable, Callable]:
        raise NoLatentCapability(f"{self.model_id} does not expose a latent split")

    def _check_window(self, window: Window) -> None:
        if self.input_len is not None and window.length != self.input_len:
            raise InvalidInput(
                f"{self.model_id} expects context length {self.input_len}, got {window.length}"
            )
        if window.length < self.min_input_len:
            raise InvalidInput(
                f"{self.model_id} needs a context of at least {self.min_input_len} points"
            )
        if self.horizon_len is not None and window.horizon != self.horizon_len:
            raise InvalidInput(
                f"{self.model_id} forecasts a fixed horizon of {self.horizon_len}, "
                f"got {window.horizon}"
            )


def _loss_grad(pred: np.ndarray, ref: np.ndarray, kind: LossKind) -> np.ndarray:
    """d(batch-mean per-step-mean loss)/d(pred) for a (B, T) batch."""
    b, t = pred.shape
    if kind is LossKind.MSE:
        return 2.0 * (pred - ref) / (t * b)
    if kind is LossKind.MAE:
        return np.sign(pred - ref) / (t * b)
    raise InvalidInput(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# Seasonal naive
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeasonalNaive(ForecastModel):
    """Repeats the last full season of the context across the horizon."""

    period: int = 1
    model_id: str = "seasonal-naive"

    def __post_init__(self):
        if int(self.period) < 1:
            raise InvalidInput(f"period must be >= 1, got {self.period!r}")
        object.__setattr__(self, "period", int(self.period))
        object.__setattr__(self, "min_input_len", self.period)

    def predict(self, window: Window, seed: int | None = None) -> ForecastDistribution:
        self._check_window(window)
        x = window.context
        m = self.period
        steps = np.arange(window.horizon)
        point = x[x.size - m + (steps % m)]
        return ForecastDistribution(point=point)


# ---------------------------------------------------------------------------
# Linear autoregression, applied recursively over the horizon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearAR(ForecastModel):
    """AR(p) with ridge-regularized closed-form fitting.

    ``weights[j]`` multiplies the j-th oldest of the last p buffer values,
    so ``weights = [0, ..., 0, 1]`` is the naive repeat-last-value model.
    Multi-step forecasts feed predictions back into the lag buffer, and the
    input Jacobian is obtained exactly by unrolling that linear recursion.
    """

    weights: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    intercept: float = 0.0
    ridge: float = 1e-4
    model_id: str = "linear-ar"

    def __post_init__(self):
        w = _freeze(_check_vector(self.weights, "weights"))
        object.__setattr__(self, "weights", w)
        if not math.isfinite(self.intercept):
            raise InvalidInput("intercept must be finite")
        if not (math.isfinite(self.ridge) and self.ridge >= 0):
            raise InvalidInput("ridge must be finite and >= 0")
        object.__setattr__(self, "min_input_len", int(w.size))

    @property
    def order(self) -> int:
        return int(self.weights.size)

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(gradient=True, trainable=True)

    def predict(self, window: Window, seed: int | None = None) -> ForecastDistribution:
        self._check_window(window)
        p = self.order
        buf = deque(window.context[-p:], maxlen=p)
        out = np.empty(window.horizon, dtype=np.float64)
        for t in range(window.horizon):
            v = float(np.dot(self.weights, np.asarray(buf))) + self.intercept
            out[t] = v
            buf.append(v)
        return ForecastDistribution(point=out)

    def _jacobian(self, length: int, horizon: int) -> np.ndarray:
        """d(prediction_t)/d(context) for every horizon step; shape (T, L)."""
        p = self.order
        rows: deque[np.ndarray] = deque(maxlen=p)
        for j in range(p):
            unit = np.zeros(length, dtype=np.float64)
            unit[length - p + j] = 1.0
            rows.append(unit)
        grads = np.empty((horizon, length), dtype=np.float64)
        for t in range(horizon):
            g = np.zeros(length, dtype=np.float64)
            for j, row in enumerate(rows):
                if self.weights[j] != 0.0:
                    g += self.weights[j] * row
            grads[t] = g
            rows.append(g)
        return grads

    def input_gradient(
        self, window: Window, reference, loss_kind: LossKind, direction: Direction
    ) -> np.ndarray:
        self._check_window(window)
        ref = _check_vector(reference, "reference")
        if ref.size != window.horizon:
            raise InvalidInput("reference length does not match the window horizon")
        pred = self.predict(window).point
        gy = direction.sign * _loss_grad(pred[None, :], ref[None, :], loss_kind)[0]
        return self._jacobian(window.length, window.horizon).T @ gy


# ---------------------------------------------------------------------------
# MLP forecaster over a standardized window
# ---------------------------------------------------------------------------


class _Cache:
    """Intermediate values of one batched MLP forward pass."""

    __slots__ = ("xin", "mu", "sd", "s", "xt", "hh", "hp", "z")

    def __init__(self, xin, mu, sd, s, xt, hh, hp, z):
        self.xin = xin
        self.mu = mu
        self.sd = sd
        self.s = s
        self.xt = xt
        self.hh = hh
        self.hp = hp
        self.z = z


def _mlp_forward(params: dict, X: np.ndarray, latent_delta: np.ndarray | None = None):
    """Forward pass on a (B, L) batch; returns de-standardized (B, T) output."""
    mu = X.mean(axis=1)
    sd = np.sqrt(X.var(axis=1))
    s = np.maximum(sd, STD_FLOOR)
    xt = (X - mu[:, None]) / s[:, None]
    hh = np.tanh(xt @ params["w1"].T + params["b1"])
    hp = hh if latent_delta is None else hh + latent_delta
    z = hp @ params["w2"].T + params["b2"]
    y = z * s[:, None] + mu[:, None]
    return y, _Cache(X, mu, sd, s, xt, hh, hp, z)


def _mlp_param_grads(params: dict, cache: _Cache, gy: np.ndarray) -> dict:
    """Parameter gradients for the point head; gy = dLoss/dY, shape (B, T).

    The standardization statistics do not depend on the parameters, so the
    only parameter paths run through the hidden layer and the output head.
    A latent perturbation in the cache is treated as a constant.
    """
    dz = gy * cache.s[:, None]
    dh = dz @ params["w2"]
    da = dh * (1.0 - cache.hh**2)
    return {
        "w2": dz.T @ cache.hp,
        "b2": dz.sum(axis=0),
        "w1": da.T @ cache.xt,
        "b1": da.sum(axis=0),
    }


def _mlp_latent_grads(params: dict, cache: _Cache, gy: np.ndarray) -> np.ndarray:
    """dLoss/d(latent perturbation), shape (B, H)."""
    return (gy * cache.s[:, None]) @ params["w2"]


def _mlp_input_grads(params: dict, cache: _Cache, gy: np.ndarray) -> np.ndarray:
    """dLoss/d(input), shape (B, L), exact through the standardization.

    The input reaches the output along four routes: the standardized
    values, the window mean (both inside the standardization and added back
    at the end), and the floored standard deviation (dividing the input and
    re-scaling the head output).  When the raw deviation sits at the floor
    the scale is constant and its path contributes nothing.
    """
    B, L = cache.xin.shape
    dz = gy * cache.s[:, None]
    ds = (gy * cache.z).sum(axis=1)
    dmu = gy.sum(axis=1)
    dh = dz @ params["w2"]
    da = dh * (1.0 - cache.hh**2)
    dxt = da @ params["w1"]
    dx = dxt / cache.s[:, None]
    dmu = dmu - dxt.sum(axis=1) / cache.s
    ds = ds - (dxt * cache.xt).sum(axis=1) / cache.s
    active = cache.sd > STD_FLOOR
    dvar = np.divide(ds, 2.0 * cache.sd, out=np.zeros_like(ds), where=active)
    dx = dx + dvar[:, None] * 2.0 * (cache.xin - cache.mu[:, None]) / L
    dx = dx + dmu[:, None] / L
    return dx


@dataclass(frozen=True)
class MLPForecaster(ForecastModel):
    """Single-hidden-layer direct multi-step forecaster.

    The context is standardized per window (mean removed, divided by the
    population standard deviation floored at ``1e-8``) before entering the
    network, and the outputs are mapped back to the original scale.  When
    quantile heads are present the model is distributional: a deterministic
    ensemble is synthesized from the quantile tracks at predict time.
    """

    w1: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    b1: np.ndarray = field(default_factory=lambda: np.zeros(1))
    w2: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    b2: np.ndarray = field(default_factory=lambda: np.zeros(1))
    quantile_levels: tuple[float, ...] = ()
    quantile_weights: tuple[np.ndarray, ...] = ()
    quantile_biases: tuple[np.ndarray, ...] = ()
    ensemble_size: int = 100
    model_id: str = "mlp"

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2:
            raise InvalidInput("w1 and w2 must be matrices")
        hidden, length = w1.shape
        horizon = w2.shape[0]
        if b1.shape != (hidden,) or w2.shape != (horizon, hidden) or b2.shape != (horizon,):
            raise InvalidInput("parameter shapes are inconsistent")
        levels = tuple(float(q) for q in self.quantile_levels)
        if any(not (0.0 < q < 1.0) for q in levels):
            raise InvalidInput("quantile levels must lie in (0, 1)")
        if len(self.quantile_weights) != len(levels) or len(self.quantile_biases) != len(levels):
            raise InvalidInput("quantile heads must match quantile levels")
        qws, qbs = [], []
        for qw, qb in zip(self.quantile_weights, self.quantile_biases):
            qw = np.asarray(qw, dtype=np.float64)
            qb = np.asarray(qb, dtype=np.float64)
            if qw.shape != (horizon, hidden) or qb.shape != (horizon,):
                raise InvalidInput("quantile head shapes are inconsistent")
            qws.append(_freeze_matrix(qw))
            qbs.append(_freeze(qb))
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInput(f"{name} contains NaN or Inf")
        object.__setattr__(self, "w1", _freeze_matrix(w1))
        object.__setattr__(self, "b1", _freeze(b1))
        object.__setattr__(self, "w2", _freeze_matrix(w2))
        object.__setattr__(self, "b2", _freeze(b2))
        object.__setattr__(self, "quantile_levels", levels)
        object.__setattr__(self, "quantile_weights", tuple(qws))
        object.__setattr__(self, "quantile_biases", tuple(qbs))
        if int(self.ensemble_size) < 2:
            raise InvalidInput("ensemble_size must be >= 2")
        object.__setattr__(self, "ensemble_size", int(self.ensemble_size))
        object.__setattr__(self, "input_len", int(length))
        object.__setattr__(self, "min_input_len", int(length))
        object.__setattr__(self, "horizon_len", int(horizon))

    @classmethod
    def initialize(
        cls,
        input_len: int,
        hidden_dim: int,
        horizon: int,
        quantile_levels: Sequence[float] = (),
        seed: int = 0,
        model_id: str = "mlp",
    ) -> "MLPForecaster":
        """Seeded Gaussian initialization scaled by fan-in."""
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, 1.0 / math.sqrt(input_len), size=(hidden_dim, input_len))
        w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=(horizon, hidden_dim))
        levels = tuple(float(q) for q in quantile_levels)
        qws = tuple(
            rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=(horizon, hidden_dim))
            for _ in levels
        )
        qbs = tuple(np.zeros(horizon) for _ in levels)
        return cls(
            w1=w1,
            b1=np.zeros(hidden_dim),
            w2=w2,
            b2=np.zeros(horizon),
            quantile_levels=levels,
            quantile_weights=qws,
            quantile_biases=qbs,
            model_id=model_id,
        )

    @property
    def hidden_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(
            gradient=True,
            latent=True,
            trainable=True,
            distributional=bool(self.quantile_levels),
        )

    def _params(self) -> dict:
        params = {
            "w1": self.w1.copy(),
            "b1": self.b1.copy(),
            "w2": self.w2.copy(),
            "b2": self.b2.copy(),
        }
        for i, _ in enumerate(self.quantile_levels):
            params[f"qw{i}"] = self.quantile_weights[i].copy()
            params[f"qb{i}"] = self.quantile_biases[i].copy()
        return params

    def _with_params(self, params: dict, model_id: str | None = None) -> "MLPForecaster":
        return MLPForecaster(
            w1=params["w1"],
            b1=params["b1"],
            w2=params["w2"],
            b2=params["b2"],
            quantile_levels=self.quantile_levels,
            quantile_weights=tuple(
                params[f"qw{i}"] for i in range(len(self.quantile_levels))
            ),
            quantile_biases=tuple(
                params[f"qb{i}"] for i in range(len(self.quantile_levels))
            ),
            ensemble_size=self.ensemble_size,
            model_id=model_id or self.model_id,
        )

    def predict(self, window: Window, seed: int | None = None) -> ForecastDistribution:
        self._check_window(window)
        params = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        y, cache = _mlp_forward(params, window.context[None, :])
        point = y[0]
        if not self.quantile_levels:
            return ForecastDistribution(point=point)
        tracks = {}
        for level, qw, qb in zip(self.quantile_levels, self.quantile_weights, self.quantile_biases):
            zq = cache.hp @ qw.T + qb
            tracks[level] = (zq * cache.s[:, None] + cache.mu[:, None])[0]
        samples = quantile_ensemble(tracks, self.ensemble_size)
        return ForecastDistribution(point=point, samples=samples, quantiles=tracks)

    def input_gradient(
        self, window: Window, reference, loss_kind: LossKind, direction: Direction
    ) -> np.ndarray:
        self._check_window(window)
        ref = _check_vector(reference, "reference")
        if ref.size != window.horizon:
            raise InvalidInput("reference length does not match the window horizon")
        params = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        y, cache = _mlp_forward(params, window.context[None, :])
        gy = direction.sign * _loss_grad(y, ref[None, :], loss_kind)
        return _mlp_input_grads(params, cache, gy)[0]

    def latent_split(self) -> tuple[Callable, Callable]:
        """(encode, decode) around the hidden layer.

        ``encode(window)`` returns the hidden activations; ``decode(latent,
        window)`` applies the forecast head and de-standardizes using the
        window's own statistics, so ``decode(encode(w), w)`` reproduces
        ``predict(w).point`` bit for bit.
        """
        params = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

        def encode(window: Window) -> np.ndarray:
            self._check_window(window)
            _, cache = _mlp_forward(params, window.context[None, :])
            return cache.hh[0].copy()

        def decode(latent: np.ndarray, window: Window) -> np.ndarray:
            self._check_window(window)
            hp = np.asarray(latent, dtype=np.float64)[None, :]
            if hp.shape[1] != self.hidden_dim:
                raise InvalidInput("latent size does not match the hidden layer")
            x = window.context[None, :]
            mu = x.mean(axis=1)
            s = np.maximum(np.sqrt(x.var(axis=1)), STD_FLOOR)
            z = hp @ params["w2"].T + params["b2"]
            return (z * s[:, None] + mu[:, None])[0]

        return encode, decode


def _freeze_matrix(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-2
    batch: int = 32
    seed: int = 0

    def __post_init__(self):
        if int(self.epochs) < 0:
            raise InvalidInput("epochs must be >= 0")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise InvalidInput("lr must be finite and > 0")
        if int(self.batch) < 1:
            raise InvalidInput("batch must be >= 1")


class _Adam:
    """Adam optimizer over a dict of parameter arrays."""

    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (
                np.sqrt(self.v[k] / c2) + self.eps
            )


def _training_arrays(dataset: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    if not dataset:
        raise InvalidInput("dataset must not be empty")
    if any(w.truth is None for w in dataset):
        raise InvalidInput("every training window needs ground truth")
    lengths = {w.length for w in dataset}
    horizons = {w.horizon for w in dataset}
    if len(lengths) != 1 or len(horizons) != 1:
        raise InvalidInput("training windows must share context length and horizon")
    X = np.stack([w.context for w in dataset])
    Y = np.stack([w.truth for w in dataset])
    return X, Y


def _mlp_fit_batch(params: dict, levels: tuple[float, ...], X, Yt) -> tuple[float, dict]:
    """Loss and gradients for one minibatch: point MSE plus pinball heads."""
    y, cache = _mlp_forward(params, X)
    B, T = y.shape
    gy = _loss_grad(y, Yt, LossKind.MSE)
    grads = _mlp_param_grads(params, cache, gy)
    total = float(np.mean((y - Yt) ** 2))
    if levels:
        dh_extra = np.zeros_like(cache.hh)
        for i, q in enumerate(levels):
            zq = cache.hp @ params[f"qw{i}"].T + params[f"qb{i}"]
            yq = zq * cache.s[:, None] + cache.mu[:, None]
            resid = Yt - yq
            total += float(np.mean(np.maximum(q * resid, (q - 1.0) * resid)))
            gyq = np.where(resid > 0, -q, np.where(resid < 0, 1.0 - q, 0.0)) / (T * B)
            dzq = gyq * cache.s[:, None]
            grads[f"qw{i}"] = dzq.T @ cache.hp
            grads[f"qb{i}"] = dzq.sum(axis=0)
            dh_extra += dzq @ params[f"qw{i}"]
        da_extra = dh_extra * (1.0 - cache.hh**2)
        grads["w1"] = grads["w1"] + da_extra.T @ cache.xt
        grads["b1"] = grads["b1"] + da_extra.sum(axis=0)
    return total, grads


def fit(model: ForecastModel, dataset: Sequence[Window], config: TrainConfig):
    """Train a copy of ``model`` on (context, truth) windows.

    Returns ``(trained_model, loss_history)``.  Zero epochs is a no-op.
    LinearAR solves its ridge system in closed form; the MLP runs seeded
    minibatch Adam on MSE plus pinball losses for any quantile heads.
    """
    if not model.capabilities.trainable:
        raise NotTrainable(f"{model.model_id} has no trainable parameters")
    if config.epochs == 0:
        return model, []
    X, Y = _training_arrays(dataset)

    if isinstance(model, LinearAR):
        p = model.order
        rows, targets = [], []
        for ctx, tru in zip(X, Y):
            seq = np.concatenate([ctx, tru])
            for i in range(p, seq.size):
                rows.append(seq[i - p : i])
                targets.append(seq[i])
        A = np.column_stack([np.stack(rows), np.ones(len(rows))])
        reg = np.diag(np.concatenate([np.full(p, model.ridge), [0.0]]))
        theta = np.linalg.solve(A.T @ A + reg, A.T @ np.asarray(targets))
        fitted = replace(model, weights=theta[:p], intercept=float(theta[p]))
        resid = A @ theta - np.asarray(targets)
        return fitted, [float(np.mean(resid**2))]

    if isinstance(model, MLPForecaster):
        if X.shape[1] != model.input_len or Y.shape[1] != model.horizon_len:
            raise InvalidInput("dataset shape does not match the model")
        params = model._params()
        rng = np.random.default_rng(config.seed)
        adam = _Adam(params, config.lr)
        history = []
        n = X.shape[0]
        for _ in range(config.epochs):
            order = rng.permutation(n)
            batch_losses = []
            for start in range(0, n, config.batch):
                idx = order[start : start + config.batch]
                value, grads = _mlp_fit_batch(params, model.quantile_levels, X[idx], Y[idx])
                adam.step(params, grads)
                batch_losses.append(value)
            history.append(float(np.mean(batch_losses)))
        return model._with_params(params), history

    raise NotTrainable(f"no training routine for {type(model).__name__}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "tsrobust-checkpoint"
CHECKPOINT_VERSION = 1


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": [repr(float(v)) for v in np.asarray(arr, dtype=np.float64).ravel(order="C")],
    }


def _decode_array(obj: dict) -> np.ndarray:
    data = np.array([float(s) for s in obj["data"]], dtype=np.float64)
    return data.reshape(obj["shape"])


def checkpoint_dict(model: ForecastModel, provenance: dict | None = None) -> dict:
    if isinstance(model, SeasonalNaive):
        body = {"type": "seasonal_naive", "period": model.period}
    elif isinstance(model, LinearAR):
        body = {
            "type": "linear_ar",
            "weights": _encode_array(model.weights),
            "intercept": repr(float(model.intercept)),
            "ridge": repr(float(model.ridge)),
        }
    elif isinstance(model, MLPForecaster):
        body = {
            "type": "mlp",
            "input_len": model.input_len,
            "hidden_dim": model.hidden_dim,
            "horizon": model.horizon_len,
            "ensemble_size": model.ensemble_size,
            "quantile_levels": [repr(q) for q in model.quantile_levels],
            "params": {
                "w1": _encode_array(model.w1),
                "b1": _encode_array(model.b1),
                "w2": _encode_array(model.w2),
                "b2": _encode_array(model.b2),
                **{
                    f"qw{i}": _encode_array(model.quantile_weights[i])
                    for i in range(len(model.quantile_levels))
                },
                **{
                    f"qb{i}": _encode_array(model.quantile_biases[i])
                    for i in range(len(model.quantile_levels))
                },
            },
        }
    else:
        raise InvalidInput(f"cannot checkpoint model type {type(model).__name__}")
    body["model_id"] = model.model_id
    out = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "model": body}
    if provenance is not None:
        out["provenance"] = provenance
    return out


def model_from_checkpoint_dict(data: dict) -> ForecastModel:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInput("not a recognized checkpoint file")
    if int(data.get("version", -1)) != CHECKPOINT_VERSION:
        raise InvalidInput(f"unsupported checkpoint version {data.get('version')!r}")
    body = data["model"]
    kind = body.get("type")
    model_id = body.get("model_id", kind or "model")
    if kind == "seasonal_naive":
        return SeasonalNaive(period=int(body["period"]), model_id=model_id)
    if kind == "linear_ar":
        return LinearAR(
            weights=_decode_array(body["weights"]),
            intercept=float(body["intercept"]),
            ridge=float(body["ridge"]),
            model_id=model_id,
        )
    if kind == "mlp":
        levels = tuple(float(q) for q in body.get("quantile_levels", []))
        params = body["params"]
        return MLPForecaster(
            w1=_decode_array(params["w1"]),
            b1=_decode_array(params["b1"]),
            w2=_decode_array(params["w2"]),
            b2=_decode_array(params["b2"]),
            quantile_levels=levels,
            quantile_weights=tuple(_decode_array(params[f"qw{i}"]) for i in range(len(levels))),
            quantile_biases=tuple(_decode_array(params[f"qb{i}"]) for i in range(len(levels))),
            ensemble_size=int(body.get("ensemble_size", 100)),
            model_id=model_id,
        )
    raise InvalidInput(f"unknown checkpoint model type {kind!r}")


def save_checkpoint(model: ForecastModel, path, provenance: dict | None = None) -> None:
    payload = checkpoint_dict(model, provenance)
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=1)
            handle.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def read_checkpoint(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"checkpoint {path} is not valid JSON: {exc}") from exc


def load_checkpoint(path) -> ForecastModel:
    return model_from_checkpoint_dict(read_checkpoint(path))
