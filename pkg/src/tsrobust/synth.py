"""Seeded synthetic series for demos, smoke runs, and regression scenarios."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInput
from .series import TimeSeries

__all__ = ["seasonal_series", "seasonal_dataframe_rows"]


def seasonal_series(
    length: int,
    period: int,
    amplitude: float = 1.0,
    trend: float = 0.0,
    level: float = 0.0,
    noise: float = 0.0,
    seed: int = 0,
    series_id: str = "synthetic",
    frequency_tag: str | None = None,
) -> TimeSeries:
    """Sine seasonality plus a linear trend plus optional Gaussian noise.

    value_t = level + amplitude * sin(2 pi t / period) + trend * t + noise_t
    with noise_t drawn from N(0, noise^2) under the given seed.
    """
    if length < 1:
        raise InvalidInput("length must be >= 1")
    if period < 2:
        raise InvalidInput("period must be >= 2")
    for name, val in (("amplitude", amplitude), ("trend", trend), ("level", level), ("noise", noise)):
        if not math.isfinite(val):
            raise InvalidInput(f"{name} must be finite")
    if noise < 0:
        raise InvalidInput("noise must be >= 0")
    t = np.arange(length, dtype=np.float64)
    values = level + amplitude * np.sin(2.0 * np.pi * t / period) + trend * t
    if noise > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise, size=length)
    return TimeSeries(values, id=series_id, frequency_tag=frequency_tag)


def seasonal_dataframe_rows(series: TimeSeries):
    """(id, timestamp, value) triples, handy for building CSV fixtures."""
    return [(series.id, t, float(v)) for t, v in enumerate(series.values)]
