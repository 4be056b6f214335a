"""Scale-invariant forecast-error metrics and attack-impact scores.

NMAE and NRMSE normalize absolute errors by the magnitude of the observed
values, so numbers are comparable across series of different scales.  CRPS
is computed in its empirical energy form from an ensemble of sample paths.
Attack impact is summarized by the relative error deviation: the signed
relative change of a metric between the clean and the attacked forecast.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateReference, InvalidInput, MissingDistribution
from .series import Direction, _check_vector, _freeze

__all__ = [
    "MetricKind",
    "ForecastDistribution",
    "RedReport",
    "EPS_DIV",
    "nmae",
    "nrmse",
    "crps_empirical",
    "crps",
    "quantile_ensemble",
    "relative_error_deviation",
    "forecast_error",
]

# Divergence guard added to the denominator of the relative error deviation.
EPS_DIV = 1e-8


class MetricKind(enum.Enum):
    NMAE = "nmae"
    NRMSE = "nrmse"
    CRPS = "crps"


@dataclass(frozen=True)
class ForecastDistribution:
    """A point forecast with optional ensemble samples and quantile tracks.

    ``samples`` has shape (n, T) with n >= 2; ``quantiles`` maps a level in
    (0, 1) to a length-T sequence.  Either may be absent for point-only
    forecasters.
    """

    point: np.ndarray
    samples: np.ndarray | None = None
    quantiles: Mapping[float, np.ndarray] | None = None

    def __post_init__(self):
        point = _freeze(_check_vector(self.point, "point"))
        object.__setattr__(self, "point", point)
        if self.samples is not None:
            samples = np.asarray(self.samples, dtype=np.float64)
            if samples.ndim != 2:
                raise InvalidInput(f"samples must be 2-D (n, T), got shape {samples.shape}")
            if samples.shape[0] < 2:
                raise InvalidInput("an ensemble needs at least 2 samples")
            if samples.shape[1] != point.size:
                raise InvalidInput(
                    f"samples horizon {samples.shape[1]} does not match point {point.size}"
                )
            if not np.all(np.isfinite(samples)):
                raise InvalidInput("samples contain NaN or Inf")
            samples = samples.copy()
            samples.flags.writeable = False
            object.__setattr__(self, "samples", samples)
        if self.quantiles is not None:
            cleaned = {}
            for level, values in self.quantiles.items():
                level = float(level)
                if not (0.0 < level < 1.0):
                    raise InvalidInput(f"quantile level {level} outside (0, 1)")
                track = _freeze(_check_vector(values, f"quantile[{level}]"))
                if track.size != point.size:
                    raise InvalidInput("quantile track length does not match point forecast")
                cleaned[level] = track
            object.__setattr__(self, "quantiles", dict(sorted(cleaned.items())))

    @property
    def horizon(self) -> int:
        return int(self.point.size)


def nmae(pred, obs) -> float:
    """Sum of absolute errors divided by the sum of absolute observations."""
    p = _check_vector(pred, "pred")
    o = _check_vector(obs, "obs")
    if p.size != o.size:
        raise InvalidInput(f"length mismatch: pred {p.size}, obs {o.size}")
    denom = float(np.sum(np.abs(o)))
    if denom == 0.0:
        raise DegenerateReference("all-zero observations make NMAE undefined")
    return float(np.sum(np.abs(o - p)) / denom)


def nrmse(pred, obs) -> float:
    """Root mean squared error divided by the mean absolute observation."""
    p = _check_vector(pred, "pred")
    o = _check_vector(obs, "obs")
    if p.size != o.size:
        raise InvalidInput(f"length mismatch: pred {p.size}, obs {o.size}")
    denom = float(np.mean(np.abs(o)))
    if denom == 0.0:
        raise DegenerateReference("all-zero observations make NRMSE undefined")
    return float(np.sqrt(np.mean((o - p) ** 2)) / denom)


def crps_empirical(samples, obs: float) -> float:
    """CRPS of one forecast step from an empirical sample set.

    Energy form: mean|X - obs| - 0.5 * mean|X - X'| with both means taken
    over all (ordered) sample pairs.  A single-sample set degenerates to the
    absolute error.
    """
    x = _check_vector(samples, "samples")
    obs = float(obs)
    if not math.isfinite(obs):
        raise InvalidInput("observation must be finite")
    term_obs = float(np.mean(np.abs(x - obs)))
    if x.size == 1:
        return term_obs
    # n^2 pair normalization: required for agreement with the CDF integral.
    spread = float(np.mean(np.abs(x[:, None] - x[None, :])))
    return term_obs - 0.5 * spread


def quantile_ensemble(quantiles: Mapping[float, np.ndarray], n: int = 100) -> np.ndarray:
    """Synthesize a deterministic sample ensemble from quantile tracks.

    The piecewise-linear quantile function through the given levels is
    evaluated at n equally spaced probabilities (i + 0.5)/n; probabilities
    outside the outermost levels clamp to the edge tracks.  No randomness
    is involved, so the result is reproducible byte for byte.
    """
    if not quantiles:
        raise InvalidInput("need at least one quantile track")
    if n < 2:
        raise InvalidInput("ensemble size must be at least 2")
    levels = sorted(float(q) for q in quantiles)
    tracks = np.stack([np.asarray(quantiles[q], dtype=np.float64) for q in levels])
    horizon = tracks.shape[1]
    probs = (np.arange(n) + 0.5) / n
    out = np.empty((n, horizon), dtype=np.float64)
    for t in range(horizon):
        out[:, t] = np.interp(probs, levels, tracks[:, t])
    return out


def crps(fd: ForecastDistribution, obs) -> float:
    """Average per-step empirical CRPS over the horizon.

    Uses the ensemble samples when present, otherwise an ensemble
    synthesized from quantile tracks.  Point-only forecasts have no
    distribution to score.
    """
    o = _check_vector(obs, "obs")
    if o.size != fd.horizon:
        raise InvalidInput(f"length mismatch: obs {o.size}, forecast {fd.horizon}")
    if fd.samples is not None:
        samples = fd.samples
    elif fd.quantiles:
        samples = quantile_ensemble(fd.quantiles)
    else:
        raise MissingDistribution("point-only forecast has no sample distribution")
    per_step = [crps_empirical(samples[:, t], o[t]) for t in range(o.size)]
    return float(np.mean(per_step))


@dataclass(frozen=True)
class RedReport:
    """Relative error deviation between a clean and an attacked forecast.

    Untargeted: (e_adv - e_clean) / (e_clean + EPS_DIV), positive when the
    attack degrades accuracy.  Targeted: (e_clean - e_adv) / (e_clean +
    EPS_DIV), positive when the attack pulls the forecast toward the target.
    """

    e_clean: float
    e_adv: float
    red: float
    direction: Direction
    eps_div: float = EPS_DIV


def relative_error_deviation(e_clean: float, e_adv: float, direction: Direction) -> RedReport:
    e_clean = float(e_clean)
    e_adv = float(e_adv)
    for name, val in (("e_clean", e_clean), ("e_adv", e_adv)):
        if not math.isfinite(val) or val < 0:
            raise InvalidInput(f"{name} must be finite and >= 0, got {val!r}")
    if direction is Direction.UNTARGETED:
        red = (e_adv - e_clean) / (e_clean + EPS_DIV)
    else:
        red = (e_clean - e_adv) / (e_clean + EPS_DIV)
    return RedReport(e_clean=e_clean, e_adv=e_adv, red=red, direction=direction)


def forecast_error(kind: MetricKind, fd: ForecastDistribution, obs) -> tuple[float, str | None]:
    """Score one forecast against a reference, with documented fallbacks.

    Returns ``(value, flag)``; the flag names any fallback that was taken:
    "degenerate-reference" when an all-zero reference forces the
    unnormalized counterpart, "degenerate-point" when CRPS falls back to MAE
    for a point-only forecast.
    """
    o = _check_vector(obs, "obs")
    if kind is MetricKind.NMAE:
        try:
            return nmae(fd.point, o), None
        except DegenerateReference:
            return float(np.mean(np.abs(o - fd.point))), "degenerate-reference"
    if kind is MetricKind.NRMSE:
        try:
            return nrmse(fd.point, o), None
        except DegenerateReference:
            return float(np.sqrt(np.mean((o - fd.point) ** 2))), "degenerate-reference"
    if kind is MetricKind.CRPS:
        try:
            return crps(fd, o), None
        except MissingDistribution:
            return float(np.mean(np.abs(o - fd.point))), "degenerate-point"
    raise InvalidInput(f"unknown metric kind {kind!r}")
