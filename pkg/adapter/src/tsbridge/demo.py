"""A seasonal-naive forecaster as the bundled demo host.

The forecast repeats the last full season of the context across the
horizon: with period m, step h of the forecast is
``context[len(context) - m + (h % m)]``.  Pure indexing, so the values
that go out on the wire are exactly the values that came in.
"""

from __future__ import annotations

from .serving import AdapterSpec

__all__ = ["seasonal_naive_spec"]


def seasonal_naive_spec(period: int = 1, model_id: str = "seasonal-naive") -> AdapterSpec:
    """Adapter spec for a repeat-last-season forecaster."""
    period = int(period)
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")

    def predict(context, horizon, seed):
        base = len(context) - period
        return [context[base + (h % period)] for h in range(horizon)]

    return AdapterSpec(predict_fn=predict, model_id=model_id, min_input_len=period)
