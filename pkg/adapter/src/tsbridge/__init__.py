"""Host a univariate forecaster behind a line-delimited JSON bridge.

The adapter turns plain Python callables into a forecasting service that
speaks one JSON object per line over stdio, so tooling in any other
process (or language) can query the model, and differentiate through it
when a gradient callable is provided.  See :class:`AdapterSpec` for the
callable contracts and :func:`serve_stdio` for the event loop.

Wrapping a real pretrained forecaster is three steps:

1.  Write ``predict_fn(context, horizon, seed)`` that feeds the context
    to the model and returns the point forecast as a list of floats
    (optionally a dict with a ``quantiles`` track per level).
2.  If the model is differentiable, write ``gradient_fn(context, y,
    loss, direction)`` returning d loss(f(context), y) / d context,
    negated when ``direction == "targeted"``; its presence is what the
    handshake advertises as the gradient capability.
3.  ``serve_stdio(AdapterSpec(predict_fn, gradient_fn, model_id=...,
    input_len=...))`` -- the loop answers requests until stdin closes.
"""

from .demo import seasonal_naive_spec
from .serving import (
    ERR_BAD_REQUEST,
    ERR_INTERNAL,
    ERR_NO_CAPABILITY,
    ERR_PARSE,
    ERR_VERSION,
    PROTOCOL_VERSION,
    AdapterSpec,
    RequestError,
    serve,
    serve_stdio,
)

__all__ = [
    "PROTOCOL_VERSION",
    "ERR_PARSE",
    "ERR_VERSION",
    "ERR_NO_CAPABILITY",
    "ERR_BAD_REQUEST",
    "ERR_INTERNAL",
    "AdapterSpec",
    "RequestError",
    "serve",
    "serve_stdio",
    "seasonal_naive_spec",
]

__version__ = "0.1.0"
