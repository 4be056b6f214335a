"""Defenses: inference-time smoothing and adversarial fine-tuning.

Smoothing replaces each context value with a causal moving average, with
shorter partial windows at the oldest samples so no future value leaks
backwards and the output keeps the input's length.

Two fine-tuning defenses harden a trainable forecaster.  Latent
adversarial training (LAT) plays the inner maximization in the hidden
representation: per batch a bounded latent perturbation is initialized from
Gaussian noise, sharpened by a few raw-gradient ascent steps on the signed
loss, kept inside an L-inf ball and inside the batchwise range of the
unperturbed latents, and the outer step then descends the plain loss at
the perturbed latent.  Input adversarial training (IAT) plays the same
game in the raw input space with sign-gradient ascent steps.  With a zero
perturbation budget both reduce exactly to plain fine-tuning: the batch
schedule and noise draws use independent seeded streams, so the parameter
trajectory is identical step for step.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DivergedTraining,
    InvalidInput,
    NoGradientCapability,
    NoLatentCapability,
    NotTrainable,
)
from .forecasters import (
    Capabilities,
    ForecastModel,
    MLPForecaster,
    _Adam,
    _loss_grad,
    _mlp_forward,
    _mlp_input_grads,
    _mlp_latent_grads,
    _mlp_param_grads,
    _training_arrays,
)
from .metrics import ForecastDistribution
from .series import Direction, LossKind, Window

__all__ = [
    "SmoothingConfig",
    "smooth",
    "SmoothingWrapper",
    "AdvTrainConfig",
    "finetune",
    "lat_finetune",
    "iat_finetune",
    "dataset_fingerprint",
]

_DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class SmoothingConfig:
    kernel: int = 3

    def __post_init__(self):
        if int(self.kernel) < 1:
            raise InvalidInput(f"kernel must be >= 1, got {self.kernel!r}")
        object.__setattr__(self, "kernel", int(self.kernel))


def smooth(values, config: SmoothingConfig | int) -> np.ndarray:
    """Causal moving average with partial windows at the start.

    Position j averages the values at max(0, j - W + 1) .. j, so the first
    W - 1 outputs use every sample available so far and later outputs use
    the full kernel.  A kernel of 1 is the identity.
    """
    kernel = config.kernel if isinstance(config, SmoothingConfig) else SmoothingConfig(config).kernel
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput("values must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("values contain NaN or Inf")
    if kernel == 1:
        return arr.copy()
    csum = np.cumsum(arr)
    n = arr.size
    out = np.empty(n, dtype=np.float64)
    head = min(kernel, n)
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if n > kernel:
        out[kernel:] = (csum[kernel:] - csum[:-kernel]) / kernel
    return out


def _smoothing_matrix(length: int, kernel: int) -> np.ndarray:
    """Row-stochastic matrix S with smooth(x) == S @ x."""
    S = np.zeros((length, length))
    for j in range(length):
        lo = max(0, j - kernel + 1)
        S[j, lo : j + 1] = 1.0 / (j - lo + 1)
    return S


class SmoothingWrapper(ForecastModel):
    """Serves an inner model behind causal input smoothing.

    Prediction queries smooth the context first; gradient queries chain
    through the (linear) smoothing operator, so white-box attacks can still
    be run adaptively against the defended pipeline.
    """

    def __init__(self, inner: ForecastModel, kernel: int):
        self.inner = inner
        self.config = SmoothingConfig(kernel)
        self.model_id = f"{inner.model_id}+smooth{self.config.kernel}"
        self.input_len = inner.input_len
        self.min_input_len = inner.min_input_len
        self.horizon_len = inner.horizon_len

    @property
    def capabilities(self) -> Capabilities:
        caps = self.inner.capabilities
        return Capabilities(
            gradient=caps.gradient,
            latent=False,
            trainable=False,
            distributional=caps.distributional,
        )

    def _smoothed(self, window: Window) -> Window:
        return Window(
            smooth(window.context, self.config),
            window.horizon,
            window.truth,
            window.origin_index,
        )

    def predict(self, window: Window, seed: int | None = None) -> ForecastDistribution:
        return self.inner.predict(self._smoothed(window), seed=seed)

    def input_gradient(
        self, window: Window, reference, loss_kind: LossKind, direction: Direction
    ) -> np.ndarray:
        grad = self.inner.input_gradient(self._smoothed(window), reference, loss_kind, direction)
        return _smoothing_matrix(window.length, self.config.kernel).T @ grad


@dataclass(frozen=True)
class AdvTrainConfig:
    """Settings for adversarial fine-tuning.

    ``epsilon`` bounds the inner perturbation in the L-inf norm (latent
    units for LAT, input units for IAT), ``inner_steps``/``inner_lr`` shape
    the inner ascent, and the outer loop runs seeded minibatch Adam.
    """

    mode: str = "lat"
    epsilon: float = 0.5
    inner_steps: int = 5
    inner_lr: float = 0.1
    outer_lr: float = 1e-4
    epochs: int = 5
    batch: int = 64
    seed: int = 0
    direction: Direction = Direction.UNTARGETED
    loss_kind: LossKind = LossKind.MSE

    def __post_init__(self):
        if self.mode not in ("lat", "iat", "plain"):
            raise InvalidInput(f"mode must be lat, iat, or plain, got {self.mode!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidInput("epsilon must be finite and >= 0")
        if int(self.inner_steps) < 0:
            raise InvalidInput("inner_steps must be >= 0")
        for name in ("inner_lr", "outer_lr"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InvalidInput(f"{name} must be finite and > 0")
        if int(self.epochs) < 0:
            raise InvalidInput("epochs must be >= 0")
        if int(self.batch) < 1:
            raise InvalidInput("batch must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "epsilon": self.epsilon,
            "inner_steps": self.inner_steps,
            "inner_lr": self.inner_lr,
            "outer_lr": self.outer_lr,
            "epochs": self.epochs,
            "batch": self.batch,
            "seed": self.seed,
            "direction": self.direction.label,
            "loss_kind": self.loss_kind.value,
        }


def dataset_fingerprint(dataset: Sequence[Window]) -> str:
    """SHA-256 over the raw bytes of every context and truth, in order."""
    digest = hashlib.sha256()
    for w in dataset:
        digest.update(np.ascontiguousarray(w.context).tobytes())
        if w.truth is not None:
            digest.update(np.ascontiguousarray(w.truth).tobytes())
    return digest.hexdigest()


def _latent_ascent(
    params: dict,
    X: np.ndarray,
    Y: np.ndarray,
    cfg: AdvTrainConfig,
    noise_rng: np.random.Generator,
) -> np.ndarray:
    """Inner LAT maximization; returns the final latent perturbation.

    The perturbation starts from standard Gaussian noise projected to the
    L-inf ball, climbs the signed loss with raw-gradient steps, and after
    every step is clipped so each perturbed latent stays inside both the
    ball and the batchwise [min, max] range of the clean latents.
    """
    _, cache = _mlp_forward(params, X)
    h = cache.hh
    lo = float(h.min())
    hi = float(h.max())
    d = noise_rng.standard_normal(h.shape)
    d = np.clip(d, -cfg.epsilon, cfg.epsilon)
    d = np.clip(h + d, lo, hi) - h
    sign = cfg.direction.sign
    for _ in range(cfg.inner_steps):
        y_adv, cache_adv = _mlp_forward(params, X, latent_delta=d)
        gy = sign * _loss_grad(y_adv, Y, cfg.loss_kind)
        grad_d = _mlp_latent_grads(params, cache_adv, gy)
        d = np.clip(d + cfg.inner_lr * grad_d, -cfg.epsilon, cfg.epsilon)
        d = np.clip(h + d, lo, hi) - h
    return d


def _input_ascent(
    params: dict,
    X: np.ndarray,
    Y: np.ndarray,
    cfg: AdvTrainConfig,
) -> np.ndarray:
    """Inner IAT maximization: sign-gradient ascent on the input."""
    dx = np.zeros_like(X)
    sign = cfg.direction.sign
    for _ in range(cfg.inner_steps):
        y_adv, cache_adv = _mlp_forward(params, X + dx)
        gy = sign * _loss_grad(y_adv, Y, cfg.loss_kind)
        grad_x = _mlp_input_grads(params, cache_adv, gy)
        dx = np.clip(dx + cfg.inner_lr * np.sign(grad_x), -cfg.epsilon, cfg.epsilon)
    return dx


def _adv_finetune(model: ForecastModel, dataset: Sequence[Window], cfg: AdvTrainConfig):
    caps = model.capabilities
    if not caps.trainable:
        raise NotTrainable(f"{model.model_id} has no trainable parameters")
    if not isinstance(model, MLPForecaster):
        raise NotTrainable(f"no fine-tuning routine for {type(model).__name__}")
    if cfg.mode == "lat" and not caps.latent:
        raise NoLatentCapability(f"{model.model_id} exposes no latent split")
    if cfg.mode == "iat" and not caps.gradient:
        raise NoGradientCapability(f"{model.model_id} exposes no input gradients")
    X, Y = _training_arrays(dataset)
    if X.shape[1] != model.input_len or Y.shape[1] != model.horizon_len:
        raise InvalidInput("dataset shape does not match the model")

    params = model._params()
    trained = {k: params[k] for k in ("w1", "b1", "w2", "b2")}
    # Independent streams keep the batch schedule identical whether or not
    # the inner loop draws noise, which makes epsilon=0 match plain tuning.
    batch_rng = np.random.default_rng(cfg.seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    adam = _Adam(trained, cfg.outer_lr)
    history: list[float] = []
    initial_loss: float | None = None
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = batch_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            Xb, Yb = X[idx], Y[idx]
            latent_delta = None
            if cfg.mode == "lat":
                latent_delta = _latent_ascent(trained, Xb, Yb, cfg, noise_rng)
                y_adv, cache = _mlp_forward(trained, Xb, latent_delta=latent_delta)
            elif cfg.mode == "iat":
                dx = _input_ascent(trained, Xb, Yb, cfg)
                y_adv, cache = _mlp_forward(trained, Xb + dx)
            else:
                y_adv, cache = _mlp_forward(trained, Xb)
            value = float(np.mean((y_adv - Yb) ** 2)) if cfg.loss_kind is LossKind.MSE else float(
                np.mean(np.abs(y_adv - Yb))
            )
            if initial_loss is None:
                initial_loss = value
            if not math.isfinite(value) or value > _DIVERGENCE_FACTOR * max(initial_loss, 1e-12):
                raise DivergedTraining(
                    f"training loss diverged at {value!r}", history=history + [value]
                )
            gy = _loss_grad(y_adv, Yb, cfg.loss_kind)
            grads = _mlp_param_grads(trained, cache, gy)
            adam.step(trained, grads)
            batch_losses.append(value)
        history.append(float(np.mean(batch_losses)))
    params.update(trained)
    suffix = {"lat": "+lat", "iat": "+iat", "plain": "+tuned"}[cfg.mode]
    return model._with_params(params, model_id=model.model_id + suffix), history


def finetune(model: ForecastModel, dataset: Sequence[Window], cfg: AdvTrainConfig):
    """Plain fine-tuning on the same schedule the defenses use."""
    return _adv_finetune(model, dataset, dataclasses.replace(cfg, mode="plain"))


def lat_finetune(model: ForecastModel, dataset: Sequence[Window], cfg: AdvTrainConfig):
    """Harden a model with latent adversarial fine-tuning."""
    if cfg.mode != "lat":
        raise InvalidInput("lat_finetune requires cfg.mode == 'lat'")
    return _adv_finetune(model, dataset, cfg)


def iat_finetune(model: ForecastModel, dataset: Sequence[Window], cfg: AdvTrainConfig):
    """Harden a model with input-space adversarial fine-tuning."""
    if cfg.mode != "iat":
        raise InvalidInput("iat_finetune requires cfg.mode == 'iat'")
    return _adv_finetune(model, dataset, cfg)
