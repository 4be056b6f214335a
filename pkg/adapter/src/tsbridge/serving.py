"""Hosting side of the newline-delimited JSON forecasting bridge.

One UTF-8 JSON object per line, envelope ``{"v": "1", "id": ..., "kind":
..., "payload": {...}}``.  The adapter answers four request kinds --
``hello``, ``predict``, ``grad``, and ``batch_predict`` -- by delegating
to plain Python callables described by an :class:`AdapterSpec`.  Every
response echoes the request id; problems come back as kind ``error``
with payload ``{code, message}`` and the loop keeps serving, so a broken
request can never wedge the hosting process.  The loop exits only when
stdin reaches end of file.

Floats travel as plain JSON numbers in Python's shortest round-trip
spelling (at most 17 significant digits), which reconstructs the exact
64-bit value on the far side.  NaN and Infinity are not legal JSON and
are refused in both directions.

Everything here is standard library only, so the adapter can run inside
whatever environment already hosts the model.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from typing import Callable

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
]

PROTOCOL_VERSION = "1"

ERR_PARSE = "parse"
ERR_VERSION = "version"
ERR_NO_CAPABILITY = "no_capability"
ERR_BAD_REQUEST = "bad_request"
ERR_INTERNAL = "internal"

DIRECTIONS = ("untargeted", "targeted")


class RequestError(Exception):
    """A request the adapter must refuse, tagged with its wire code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _bad(message: str) -> RequestError:
    return RequestError(ERR_BAD_REQUEST, message)


# ---------------------------------------------------------------------------
# What gets hosted
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdapterSpec:
    """A forecaster as callables, plus what the handshake should declare.

    ``predict_fn(context, horizon, seed)`` receives the context as a list
    of floats and must return either a flat sequence of ``horizon`` floats
    (the point forecast) or a dict ``{"point": [...], "quantiles":
    {level: [...], ...}}``.  Quantile output requires ``distributional=
    True``; declaring it without producing quantiles is fine, the reverse
    is treated as a hosting defect.

    ``gradient_fn(context, y, loss, direction)``, when given, must return
    the derivative with respect to the context of the named loss between
    the model's forecast and ``y``, negated when ``direction`` is
    ``"targeted"``.  Its presence is what the handshake advertises as the
    gradient capability, so declared capabilities always match the
    provided callables.

    Window constraints (``input_len``, ``min_input_len``, ``horizon_len``)
    are declared in the handshake and enforced on every request.
    """

    predict_fn: Callable
    gradient_fn: Callable | None = None
    model_id: str = "adapter"
    distributional: bool = False
    input_len: int | None = None
    min_input_len: int = 1
    horizon_len: int | None = None

    def __post_init__(self):
        if not callable(self.predict_fn):
            raise ValueError("predict_fn must be callable")
        if self.gradient_fn is not None and not callable(self.gradient_fn):
            raise ValueError("gradient_fn must be callable or None")
        if not isinstance(self.model_id, str) or not self.model_id:
            raise ValueError("model_id must be a non-empty string")
        if int(self.min_input_len) < 1:
            raise ValueError("min_input_len must be >= 1")
        object.__setattr__(self, "min_input_len", int(self.min_input_len))
        for name in ("input_len", "horizon_len"):
            value = getattr(self, name)
            if value is not None:
                if int(value) < 1:
                    raise ValueError(f"{name} must be >= 1 or None")
                object.__setattr__(self, name, int(value))
        if self.input_len is not None and self.input_len < self.min_input_len:
            raise ValueError("input_len cannot be below min_input_len")

    def hello_payload(self) -> dict:
        return {
            "model_id": self.model_id,
            "capabilities": {
                "gradient": self.gradient_fn is not None,
                "latent": False,
                "trainable": False,
                "distributional": bool(self.distributional),
            },
            "constraints": {
                "input_len": self.input_len,
                "min_input_len": self.min_input_len,
                "horizon_len": self.horizon_len,
            },
        }


# ---------------------------------------------------------------------------
# Envelope codec
# ---------------------------------------------------------------------------


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not valid on the wire")


def _encode(msg_id, kind: str, payload: dict) -> str:
    body = {"v": PROTOCOL_VERSION, "id": msg_id, "kind": kind, "payload": payload}
    return json.dumps(body, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def _decode(line: str) -> dict:
    try:
        body = json.loads(line, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        offset = len(line[: exc.pos].encode("utf-8"))
        raise RequestError(ERR_PARSE, f"malformed message at byte {offset}: {exc.msg}") from None
    except ValueError as exc:
        raise RequestError(ERR_PARSE, str(exc)) from None
    if not isinstance(body, dict):
        raise RequestError(ERR_PARSE, "message is not a JSON object")
    if body.get("v") != PROTOCOL_VERSION:
        raise RequestError(ERR_VERSION, f"unsupported protocol version {body.get('v')!r}")
    if "id" not in body:
        raise RequestError(ERR_PARSE, "message lacks an id")
    kind = body.get("kind")
    if not isinstance(kind, str):
        raise RequestError(ERR_PARSE, "message lacks a kind")
    payload = body.get("payload", {})
    if not isinstance(payload, dict):
        raise RequestError(ERR_PARSE, "payload must be a JSON object")
    return {"id": body["id"], "kind": kind, "payload": payload}


# ---------------------------------------------------------------------------
# Request validation
# ---------------------------------------------------------------------------


def _float_list(values, what: str) -> list[float]:
    if not isinstance(values, list) or not values:
        raise _bad(f"{what} must be a non-empty list of numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _bad(f"{what} must contain only numbers")
        v = float(v)
        if not math.isfinite(v):
            raise _bad(f"{what} contains non-finite values")
        out.append(v)
    return out


def _require(payload: dict, key: str):
    if key not in payload:
        raise _bad(f"request payload lacks {key!r}")
    return payload[key]


def _window_args(spec: AdapterSpec, payload: dict, horizon=None):
    context = _float_list(_require(payload, "context"), "context")
    if horizon is None:
        horizon = _require(payload, "horizon")
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise _bad("horizon must be an integer")
    if horizon < 1:
        raise _bad(f"horizon must be >= 1, got {horizon}")
    seed = payload.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise _bad("seed must be an integer")
    if len(context) < spec.min_input_len:
        raise _bad(f"context of {len(context)} is shorter than the minimum {spec.min_input_len}")
    if spec.input_len is not None and len(context) != spec.input_len:
        raise _bad(f"context must have exactly {spec.input_len} values, got {len(context)}")
    if spec.horizon_len is not None and horizon != spec.horizon_len:
        raise _bad(f"horizon is fixed at {spec.horizon_len}, got {horizon}")
    return context, horizon, seed


def _internal_list(values, what: str, expect: int) -> list[float]:
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise RequestError(ERR_INTERNAL, f"{what} is not a numeric sequence") from None
    if len(out) != expect:
        raise RequestError(ERR_INTERNAL, f"{what} has length {len(out)}, expected {expect}")
    if not all(math.isfinite(v) for v in out):
        raise RequestError(ERR_INTERNAL, f"{what} contains non-finite values")
    return out


# ---------------------------------------------------------------------------
# Request handlers
# ---------------------------------------------------------------------------


def _handle_predict(spec: AdapterSpec, payload: dict) -> dict:
    context, horizon, seed = _window_args(spec, payload)
    raw = spec.predict_fn(context, horizon, seed)
    if isinstance(raw, dict):
        point = raw.get("point")
        quantiles = raw.get("quantiles")
        extra = set(raw) - {"point", "quantiles"}
        if extra:
            raise RequestError(ERR_INTERNAL, f"predict_fn returned unknown keys {sorted(extra)}")
    else:
        point, quantiles = raw, None
    out = {"point": _internal_list(point, "point forecast", horizon)}
    if quantiles:
        if not spec.distributional:
            raise RequestError(
                ERR_INTERNAL, "predict_fn returned quantiles but AdapterSpec is not distributional"
            )
        if not isinstance(quantiles, dict):
            raise RequestError(ERR_INTERNAL, "quantiles must be a dict keyed by level")
        tracks = {}
        for level, track in quantiles.items():
            tracks[repr(float(level))] = _internal_list(track, f"quantile {level}", horizon)
        out["quantiles"] = tracks
    return out


def _handle_grad(spec: AdapterSpec, payload: dict) -> dict:
    y = _float_list(_require(payload, "y"), "y")
    context, _, _ = _window_args(spec, payload, horizon=len(y))
    loss = _require(payload, "loss")
    if not isinstance(loss, str) or not loss:
        raise _bad("loss must be a non-empty string")
    direction = _require(payload, "direction")
    if direction not in DIRECTIONS:
        raise _bad(f"unknown direction {direction!r}")
    if spec.gradient_fn is None:
        raise RequestError(ERR_NO_CAPABILITY, f"{spec.model_id} does not expose input gradients")
    grad = spec.gradient_fn(context, y, loss, direction)
    return {"gradient": _internal_list(grad, "gradient", len(context))}


def _handle_batch(spec: AdapterSpec, payload: dict, max_batch: int | None) -> dict:
    items = _require(payload, "items")
    if not isinstance(items, list) or not items:
        raise _bad("items must be a non-empty list")
    if max_batch is not None and len(items) > max_batch:
        raise _bad(f"batch of {len(items)} exceeds the limit of {max_batch}")
    # Validate every item before running any, so a malformed tail entry
    # cannot leave the batch half-answered.
    for item in items:
        if not isinstance(item, dict):
            raise _bad("each batch item must be an object")
        _window_args(spec, item)
    return {"items": [_handle_predict(spec, item) for item in items]}


# ---------------------------------------------------------------------------
# The serving loop
# ---------------------------------------------------------------------------


def serve(spec: AdapterSpec, rfile, wfile, max_batch: int | None = None) -> None:
    """Answer bridge requests from a binary line stream until EOF.

    Malformed lines get a ``parse`` error with a null id; recognizable
    requests that cannot be served get an error echoing their id.  The
    wrapped callables' own exceptions come back as ``internal`` errors.
    Every response is flushed immediately.
    """
    if not isinstance(spec, AdapterSpec):
        raise TypeError("serve() needs an AdapterSpec")

    def reply(msg_id, kind, payload):
        try:
            line = _encode(msg_id, kind, payload)
        except ValueError:
            line = _encode(msg_id, "error", {"code": ERR_INTERNAL, "message": "non-finite value in response"})
        wfile.write(line.encode("utf-8") + b"\n")
        wfile.flush()

    for raw in iter(rfile.readline, b""):
        if raw.strip() == b"":
            continue
        try:
            text = raw.decode("utf-8").rstrip("\r\n")
        except UnicodeDecodeError:
            reply(None, "error", {"code": ERR_PARSE, "message": "request is not valid UTF-8"})
            continue
        try:
            msg = _decode(text)
        except RequestError as exc:
            reply(None, "error", {"code": exc.code, "message": str(exc)})
            continue
        msg_id, kind, payload = msg["id"], msg["kind"], msg["payload"]
        try:
            if kind == "hello":
                reply(msg_id, "hello", spec.hello_payload())
            elif kind == "predict":
                reply(msg_id, "predict", _handle_predict(spec, payload))
            elif kind == "grad":
                reply(msg_id, "grad", _handle_grad(spec, payload))
            elif kind == "batch_predict":
                reply(msg_id, "batch_predict", _handle_batch(spec, payload, max_batch))
            else:
                reply(msg_id, "error", {"code": ERR_BAD_REQUEST, "message": f"unknown kind {kind!r}"})
        except RequestError as exc:
            reply(msg_id, "error", {"code": exc.code, "message": str(exc)})
        except Exception as exc:  # noqa: BLE001  -- the adapter must stay up
            reply(msg_id, "error", {"code": ERR_INTERNAL, "message": f"{type(exc).__name__}: {exc}"})


def serve_stdio(spec: AdapterSpec, max_batch: int | None = None) -> None:
    """Serve over this process's stdin/stdout; returns on EOF."""
    serve(spec, sys.stdin.buffer, sys.stdout.buffer, max_batch=max_batch)
