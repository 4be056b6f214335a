"""Line-delimited JSON bridge to external forecasting processes.

One UTF-8 JSON object per line, envelope ``{"v": "1", "id": ..., "kind":
..., "payload": {...}}``.  Request kinds are ``hello``, ``predict``,
``grad``, and ``batch_predict``; a response mirrors the request kind and
echoes its id, or carries kind ``error`` with payload ``{code, message}``.
The stream is strictly request/response with one request in flight per
connection, so responses always answer the oldest unanswered request.

Floats ride as plain JSON numbers printed with Python's shortest
round-trip repr (at most 17 significant digits), which reproduces the
exact 64-bit value on the far side.  NaN and Infinity are not legal JSON
and are refused in both directions.

:class:`RemoteModel` puts a served forecaster behind the standard
:class:`~tsrobust.forecasters.ForecastModel` interface, so attacks cannot
tell a bridged model from an in-process one.  Constraint and capability
violations are raised locally before any I/O.
"""

from __future__ import annotations

import json
import queue
import socket
import socketserver
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    BridgeTimeout,
    InvalidInput,
    NoGradientCapability,
    ProtocolError,
    VersionMismatch,
)
from .forecasters import Capabilities, ForecastModel
from .metrics import ForecastDistribution
from .series import Direction, LossKind, Window

__all__ = [
    "PROTOCOL_VERSION",
    "BridgeEndpoint",
    "BridgeClient",
    "RemoteModel",
    "StdioTransport",
    "TcpTransport",
    "connect",
    "serve",
    "serve_tcp",
    "encode_message",
    "decode_message",
]

PROTOCOL_VERSION = "1"

ERR_PARSE = "parse"
ERR_VERSION = "version"
ERR_NO_CAPABILITY = "no_capability"
ERR_BAD_REQUEST = "bad_request"
ERR_INTERNAL = "internal"


# ---------------------------------------------------------------------------
# Envelope codec
# ---------------------------------------------------------------------------


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not valid on the wire")


def encode_message(msg_id, kind: str, payload: dict) -> str:
    """Serialize one envelope to a single line (without the newline)."""
    body = {"v": PROTOCOL_VERSION, "id": msg_id, "kind": kind, "payload": payload}
    return json.dumps(body, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def decode_message(line: str) -> dict:
    """Parse and validate one envelope line.

    Raises :class:`ProtocolError` (with the byte offset of the problem) on
    malformed JSON, and :class:`VersionMismatch` on a foreign version tag.
    """
    try:
        body = json.loads(line, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        offset = len(line[: exc.pos].encode("utf-8"))
        raise ProtocolError(f"malformed message at byte {offset}: {exc.msg}") from None
    except ValueError as exc:
        raise ProtocolError(str(exc)) from None
    if not isinstance(body, dict):
        raise ProtocolError("message is not a JSON object")
    if body.get("v") != PROTOCOL_VERSION:
        raise VersionMismatch(f"unsupported protocol version {body.get('v')!r}")
    if "id" not in body:
        raise ProtocolError("message lacks an id")
    kind = body.get("kind")
    if not isinstance(kind, str):
        raise ProtocolError("message lacks a kind")
    payload = body.get("payload", {})
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be a JSON object")
    return {"id": body["id"], "kind": kind, "payload": payload}


def _finite_vector(values, what: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise ProtocolError(f"{what} is not a numeric sequence") from None
    if arr.ndim != 1 or arr.size == 0:
        raise ProtocolError(f"{what} must be a non-empty flat sequence")
    if not np.all(np.isfinite(arr)):
        raise ProtocolError(f"{what} contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


class StdioTransport:
    """Talks to a child process over its stdin/stdout.

    A reader thread drains the child's stdout into a queue so receives can
    honor a timeout; stderr is inherited for the child's own logging.
    """

    def __init__(self, command):
        cmd = [str(c) for c in command]
        if not cmd:
            raise InvalidInput("stdio transport needs a non-empty command")
        self._proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        stream = self._proc.stdout
        for raw in iter(stream.readline, b""):
            self._lines.put(raw)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line.encode("utf-8") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError):
            raise ProtocolError("bridge process is not accepting requests") from None

    def recv_line(self, timeout: float) -> str:
        try:
            raw = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise BridgeTimeout(f"no response within {timeout:g}s") from None
        if raw is None:
            raise ProtocolError("bridge closed the connection")
        try:
            return raw.decode("utf-8").rstrip("\r\n")
        except UnicodeDecodeError:
            raise ProtocolError("response line is not valid UTF-8") from None

    def close(self) -> None:
        for stream in (self._proc.stdin,):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport:
    """Talks to a long-lived server over a TCP connection."""

    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        self._sock = socket.create_connection((host, int(port)), timeout=connect_timeout)
        self._file = self._sock.makefile("rb")

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall(line.encode("utf-8") + b"\n")
        except OSError:
            raise ProtocolError("bridge connection is not accepting requests") from None

    def recv_line(self, timeout: float) -> str:
        self._sock.settimeout(timeout)
        try:
            raw = self._file.readline()
        except TimeoutError:
            raise BridgeTimeout(f"no response within {timeout:g}s") from None
        except OSError:
            raise ProtocolError("bridge connection failed while reading") from None
        if raw == b"":
            raise ProtocolError("bridge closed the connection")
        try:
            return raw.decode("utf-8").rstrip("\r\n")
        except UnicodeDecodeError:
            raise ProtocolError("response line is not valid UTF-8") from None

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()


# ---------------------------------------------------------------------------
# Endpoint description and client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeEndpoint:
    """Where and how to reach a served forecaster."""

    kind: str = "stdio"
    command: tuple = ()
    host: str = ""
    port: int = 0
    timeout_ms: int = 30000
    max_batch: int = 32

    def __post_init__(self):
        if self.kind not in ("stdio", "tcp"):
            raise InvalidInput(f"transport must be stdio or tcp, got {self.kind!r}")
        if int(self.timeout_ms) <= 0:
            raise InvalidInput("timeout_ms must be > 0")
        if int(self.max_batch) < 1:
            raise InvalidInput("max_batch must be >= 1")
        object.__setattr__(self, "timeout_ms", int(self.timeout_ms))
        object.__setattr__(self, "max_batch", int(self.max_batch))
        if self.kind == "stdio":
            cmd = tuple(str(c) for c in self.command)
            if not cmd:
                raise InvalidInput("stdio endpoint needs a command")
            object.__setattr__(self, "command", cmd)
        else:
            if not self.host:
                raise InvalidInput("tcp endpoint needs a host")
            port = int(self.port)
            if not (0 < port < 65536):
                raise InvalidInput(f"port out of range: {self.port!r}")
            object.__setattr__(self, "port", port)

    @property
    def timeout(self) -> float:
        return self.timeout_ms / 1000.0

    @staticmethod
    def stdio(command, timeout_ms: int = 30000, max_batch: int = 32) -> "BridgeEndpoint":
        return BridgeEndpoint(kind="stdio", command=tuple(command), timeout_ms=timeout_ms, max_batch=max_batch)

    @staticmethod
    def tcp(host: str, port: int, timeout_ms: int = 30000, max_batch: int = 32) -> "BridgeEndpoint":
        return BridgeEndpoint(kind="tcp", host=host, port=port, timeout_ms=timeout_ms, max_batch=max_batch)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "timeout_ms": self.timeout_ms, "max_batch": self.max_batch}
        if self.kind == "stdio":
            out["command"] = list(self.command)
        else:
            out["host"] = self.host
            out["port"] = self.port
        return out

    @staticmethod
    def from_dict(data: dict) -> "BridgeEndpoint":
        if not isinstance(data, dict):
            raise InvalidInput("endpoint spec must be an object")
        known = {"kind", "command", "host", "port", "timeout_ms", "max_batch"}
        extra = set(data) - known
        if extra:
            raise InvalidInput(f"unknown endpoint fields: {sorted(extra)}")
        kwargs = dict(data)
        if "command" in kwargs:
            kwargs["command"] = tuple(kwargs["command"])
        return BridgeEndpoint(**kwargs)


@dataclass(frozen=True)
class RemoteInfo:
    """What the far side declared during the handshake."""

    model_id: str
    capabilities: Capabilities
    input_len: int | None
    min_input_len: int
    horizon_len: int | None


class BridgeClient:
    """Serialized request/response stream over one transport.

    Safe to hand between threads but not to share concurrently; open one
    client per concurrent attack run.
    """

    def __init__(self, transport, timeout: float = 30.0):
        self._transport = transport
        self._timeout = float(timeout)
        self._next_id = 0
        self._closed = False

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, kind: str, payload: dict) -> dict:
        if self._closed:
            raise ProtocolError("client is closed")
        self._next_id += 1
        rid = self._next_id
        self._transport.send_line(encode_message(rid, kind, payload))
        msg = decode_message(self._transport.recv_line(self._timeout))
        if msg["id"] != rid:
            raise ProtocolError(f"response id {msg['id']!r} does not match request id {rid}")
        if msg["kind"] == "error":
            self._raise_remote(msg["payload"])
        if msg["kind"] != kind:
            raise ProtocolError(f"response kind {msg['kind']!r} does not answer {kind!r}")
        return msg["payload"]

    @staticmethod
    def _raise_remote(payload: dict):
        code = payload.get("code", ERR_INTERNAL)
        message = payload.get("message", "")
        if code == ERR_VERSION:
            raise VersionMismatch(message or "remote refused the protocol version")
        if code == ERR_NO_CAPABILITY:
            raise NoGradientCapability(message or "remote lacks the requested capability")
        raise ProtocolError(f"remote error [{code}]: {message}")

    def hello(self) -> RemoteInfo:
        payload = self.request("hello", {})
        caps = payload.get("capabilities", {})
        if not isinstance(caps, dict):
            raise ProtocolError("hello response lacks a capabilities object")
        constraints = payload.get("constraints", {})
        if not isinstance(constraints, dict):
            raise ProtocolError("hello response lacks a constraints object")

        def opt_int(key):
            val = constraints.get(key)
            if val is None:
                return None
            if not isinstance(val, int) or isinstance(val, bool):
                raise ProtocolError(f"constraint {key} must be an integer or null")
            return val

        return RemoteInfo(
            model_id=str(payload.get("model_id", "remote")),
            capabilities=Capabilities(
                gradient=bool(caps.get("gradient", False)),
                latent=bool(caps.get("latent", False)),
                trainable=bool(caps.get("trainable", False)),
                distributional=bool(caps.get("distributional", False)),
            ),
            input_len=opt_int("input_len"),
            min_input_len=opt_int("min_input_len") or 1,
            horizon_len=opt_int("horizon_len"),
        )

    def predict(self, context: np.ndarray, horizon: int, seed: int | None) -> ForecastDistribution:
        payload = {"context": np.asarray(context, dtype=np.float64).tolist(), "horizon": int(horizon)}
        if seed is not None:
            payload["seed"] = int(seed)
        return _distribution_from_payload(self.request("predict", payload), horizon)

    def batch_predict(self, items, max_batch: int) -> list[ForecastDistribution]:
        """Forecast several windows, preserving request order.

        Oversized batches are split into consecutive requests of at most
        ``max_batch`` items, so the one-in-flight rule still holds.
        """
        specs = [
            {
                "context": np.asarray(ctx, dtype=np.float64).tolist(),
                "horizon": int(horizon),
                **({"seed": int(seed)} if seed is not None else {}),
            }
            for ctx, horizon, seed in items
        ]
        out: list[ForecastDistribution] = []
        for start in range(0, len(specs), max_batch):
            chunk = specs[start : start + max_batch]
            payload = self.request("batch_predict", {"items": chunk})
            answers = payload.get("items")
            if not isinstance(answers, list) or len(answers) != len(chunk):
                raise ProtocolError("batch response does not match the request length")
            for spec, answer in zip(chunk, answers):
                if not isinstance(answer, dict):
                    raise ProtocolError("batch response item is not an object")
                out.append(_distribution_from_payload(answer, spec["horizon"]))
        return out

    def grad(
        self,
        context: np.ndarray,
        reference: np.ndarray,
        loss_kind: LossKind,
        direction: Direction,
    ) -> np.ndarray:
        payload = {
            "context": np.asarray(context, dtype=np.float64).tolist(),
            "y": np.asarray(reference, dtype=np.float64).tolist(),
            "loss": loss_kind.value,
            "direction": direction.label,
        }
        answer = self.request("grad", payload)
        grad = _finite_vector(answer.get("gradient"), "gradient")
        if grad.size != len(payload["context"]):
            raise ProtocolError(
                f"gradient length {grad.size} does not match context length {len(payload['context'])}"
            )
        return grad


def _distribution_from_payload(payload: dict, horizon: int) -> ForecastDistribution:
    point = _finite_vector(payload.get("point"), "point forecast")
    if point.size != horizon:
        raise ProtocolError(f"point forecast length {point.size} != horizon {horizon}")
    quantiles = None
    if "quantiles" in payload and payload["quantiles"] is not None:
        raw = payload["quantiles"]
        if not isinstance(raw, dict):
            raise ProtocolError("quantiles must be an object keyed by level")
        quantiles = {}
        for key, values in raw.items():
            try:
                level = float(key)
            except ValueError:
                raise ProtocolError(f"bad quantile level {key!r}") from None
            track = _finite_vector(values, f"quantile {key}")
            if track.size != horizon:
                raise ProtocolError(f"quantile {key} length {track.size} != horizon {horizon}")
            quantiles[level] = track
    try:
        return ForecastDistribution(point=point, quantiles=quantiles)
    except InvalidInput as exc:
        raise ProtocolError(f"invalid forecast payload: {exc}") from None


class RemoteModel(ForecastModel):
    """A served forecaster behind the in-process model interface.

    Window constraints from the handshake are enforced locally, so a bad
    request never reaches the wire.  Latent access and training are never
    available across the bridge.
    """

    def __init__(self, client: BridgeClient, info: RemoteInfo):
        self.client = client
        self.info = info
        self.model_id = info.model_id
        self.input_len = info.input_len
        self.min_input_len = info.min_input_len
        self.horizon_len = info.horizon_len

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(
            gradient=self.info.capabilities.gradient,
            latent=False,
            trainable=False,
            distributional=self.info.capabilities.distributional,
        )

    def predict(self, window: Window, seed: int | None = None) -> ForecastDistribution:
        self._check_window(window)
        return self.client.predict(window.context, window.horizon, seed)

    def input_gradient(
        self, window: Window, reference, loss_kind: LossKind, direction: Direction
    ) -> np.ndarray:
        if not self.info.capabilities.gradient:
            raise NoGradientCapability(f"{self.model_id} does not expose input gradients")
        self._check_window(window)
        ref = np.asarray(reference, dtype=np.float64)
        if ref.shape != (window.horizon,):
            raise InvalidInput("reference length must match the horizon")
        return self.client.grad(window.context, ref, loss_kind, direction)

    def close(self) -> None:
        self.client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(endpoint: BridgeEndpoint) -> RemoteModel:
    """Open a transport, perform the handshake, and wrap the far side."""
    if endpoint.kind == "stdio":
        transport = StdioTransport(endpoint.command)
    else:
        transport = TcpTransport(endpoint.host, endpoint.port)
    client = BridgeClient(transport, timeout=endpoint.timeout)
    try:
        info = client.hello()
    except Exception:
        client.close()
        raise
    return RemoteModel(client, info)


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


def _hello_payload(model: ForecastModel) -> dict:
    caps = model.capabilities
    return {
        "model_id": model.model_id,
        "capabilities": {
            "gradient": caps.gradient,
            "latent": caps.latent,
            "trainable": caps.trainable,
            "distributional": caps.distributional,
        },
        "constraints": {
            "input_len": model.input_len,
            "min_input_len": model.min_input_len,
            "horizon_len": model.horizon_len,
        },
    }


def _require(payload: dict, key: str):
    if key not in payload:
        raise InvalidInput(f"request payload lacks {key!r}")
    return payload[key]


def _window_from_payload(payload: dict, horizon=None) -> tuple[Window, int | None]:
    context = _require(payload, "context")
    if horizon is None:
        horizon = _require(payload, "horizon")
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise InvalidInput("horizon must be an integer")
    seed = payload.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise InvalidInput("seed must be an integer")
    return Window(context, horizon), seed


def _predict_payload(model: ForecastModel, payload: dict) -> dict:
    window, seed = _window_from_payload(payload)
    fd = model.predict(window, seed=seed)
    out = {"point": fd.point.tolist()}
    if fd.quantiles is not None:
        out["quantiles"] = {repr(level): track.tolist() for level, track in fd.quantiles.items()}
    return out


def _grad_payload(model: ForecastModel, payload: dict) -> dict:
    y = np.asarray(_require(payload, "y"), dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise InvalidInput("y must be a non-empty flat sequence")
    window, _ = _window_from_payload(payload, horizon=int(y.size))
    try:
        loss_kind = LossKind(_require(payload, "loss"))
    except ValueError:
        raise InvalidInput(f"unknown loss {payload.get('loss')!r}") from None
    direction_label = _require(payload, "direction")
    if direction_label == Direction.UNTARGETED.label:
        direction = Direction.UNTARGETED
    elif direction_label == Direction.TARGETED.label:
        direction = Direction.TARGETED
    else:
        raise InvalidInput(f"unknown direction {direction_label!r}")
    grad = model.input_gradient(window, y, loss_kind, direction)
    return {"gradient": np.asarray(grad, dtype=np.float64).tolist()}


def _batch_payload(model: ForecastModel, payload: dict, max_batch: int | None) -> dict:
    items = _require(payload, "items")
    if not isinstance(items, list) or not items:
        raise InvalidInput("items must be a non-empty list")
    if max_batch is not None and len(items) > max_batch:
        raise InvalidInput(f"batch of {len(items)} exceeds the limit of {max_batch}")
    # Validate every item before evaluating any, so a malformed tail entry
    # cannot leave the batch half-answered.
    for item in items:
        if not isinstance(item, dict):
            raise InvalidInput("each batch item must be an object")
        _window_from_payload(item)
    return {"items": [_predict_payload(model, item) for item in items]}


def serve(model: ForecastModel, rfile, wfile, max_batch: int | None = None) -> None:
    """Answer bridge requests from a binary line stream until EOF.

    Malformed lines and bad requests get error responses; the loop keeps
    serving afterwards, so one broken client request cannot wedge the
    process.
    """

    def reply(msg_id, kind, payload):
        try:
            line = encode_message(msg_id, kind, payload)
        except ValueError:
            line = encode_message(
                msg_id, "error", {"code": ERR_INTERNAL, "message": "non-finite value in response"}
            )
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
            msg = decode_message(text)
        except VersionMismatch as exc:
            reply(None, "error", {"code": ERR_VERSION, "message": str(exc)})
            continue
        except ProtocolError as exc:
            reply(None, "error", {"code": ERR_PARSE, "message": str(exc)})
            continue
        msg_id, kind, payload = msg["id"], msg["kind"], msg["payload"]
        try:
            if kind == "hello":
                reply(msg_id, "hello", _hello_payload(model))
            elif kind == "predict":
                reply(msg_id, "predict", _predict_payload(model, payload))
            elif kind == "grad":
                reply(msg_id, "grad", _grad_payload(model, payload))
            elif kind == "batch_predict":
                reply(msg_id, "batch_predict", _batch_payload(model, payload, max_batch))
            else:
                reply(msg_id, "error", {"code": ERR_BAD_REQUEST, "message": f"unknown kind {kind!r}"})
        except NoGradientCapability as exc:
            reply(msg_id, "error", {"code": ERR_NO_CAPABILITY, "message": str(exc)})
        except InvalidInput as exc:
            reply(msg_id, "error", {"code": ERR_BAD_REQUEST, "message": str(exc)})
        except Exception as exc:  # noqa: BLE001  -- the server must stay up
            reply(msg_id, "error", {"code": ERR_INTERNAL, "message": f"{type(exc).__name__}: {exc}"})


def serve_tcp(model: ForecastModel, host: str = "127.0.0.1", port: int = 0):
    """Start a threaded TCP server; returns it with ``server_address`` bound.

    Call ``serve_forever()`` to block, or drive it from a thread and call
    ``shutdown()`` when done.  Each connection gets its own serialized
    request stream.
    """

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            serve(model, self.rfile, self.wfile)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    return Server((host, int(port)), Handler)
