"""Wire-format conformance for the hosting loop, over in-memory streams."""

import io
import json
import math
import struct

import pytest

from tsbridge import (
    ERR_BAD_REQUEST,
    ERR_INTERNAL,
    ERR_NO_CAPABILITY,
    ERR_PARSE,
    ERR_VERSION,
    AdapterSpec,
    seasonal_naive_spec,
    serve,
)


def request(msg_id, kind, payload) -> bytes:
    body = {"v": "1", "id": msg_id, "kind": kind, "payload": payload}
    return json.dumps(body, separators=(",", ":")).encode("utf-8")


def answers(spec, lines, max_batch=None):
    """Feed raw request lines through the serving loop, return reply dicts."""
    rfile = io.BytesIO(b"".join(line + b"\n" for line in lines))
    wfile = io.BytesIO()
    serve(spec, rfile, wfile, max_batch=max_batch)
    return [json.loads(line) for line in wfile.getvalue().decode("utf-8").splitlines()]


def raw_answers(spec, lines, max_batch=None):
    rfile = io.BytesIO(b"".join(line + b"\n" for line in lines))
    wfile = io.BytesIO()
    serve(spec, rfile, wfile, max_batch=max_batch)
    return wfile.getvalue().decode("utf-8").splitlines()


def toy_gradient_spec():
    """Horizon-1 sum model with its exact input gradient."""

    def predict(context, horizon, seed):
        return [sum(context)] * horizon

    def gradient(context, y, loss, direction):
        sigma = -1.0 if direction == "targeted" else 1.0
        residual = sum(context) - y[0]
        return [sigma * 2.0 * residual for _ in context]

    return AdapterSpec(predict, gradient, model_id="sum", horizon_len=1)


# ---------------------------------------------------------------------------
# Handshake
# ---------------------------------------------------------------------------


def test_hello_golden_line():
    line = raw_answers(seasonal_naive_spec(2), [request(1, "hello", {})])[0]
    assert line == (
        '{"v":"1","id":1,"kind":"hello","payload":{'
        '"model_id":"seasonal-naive",'
        '"capabilities":{"gradient":false,"latent":false,"trainable":false,"distributional":false},'
        '"constraints":{"input_len":null,"min_input_len":2,"horizon_len":null}}}'
    )


def test_hello_reflects_provided_callables():
    payload = answers(toy_gradient_spec(), [request(1, "hello", {})])[0]["payload"]
    assert payload["capabilities"]["gradient"] is True
    assert payload["capabilities"]["latent"] is False
    assert payload["capabilities"]["trainable"] is False
    assert payload["constraints"]["horizon_len"] == 1

    spec = AdapterSpec(lambda c, h, s: [0.0] * h, model_id="flat", distributional=True)
    payload = answers(spec, [request(1, "hello", {})])[0]["payload"]
    assert payload["capabilities"]["distributional"] is True


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def test_predict_repeats_last_season():
    reply = answers(
        seasonal_naive_spec(2),
        [request(4, "predict", {"context": [1, 2, 1, 2], "horizon": 3})],
    )[0]
    assert reply == {"v": "1", "id": 4, "kind": "predict", "payload": {"point": [1.0, 2.0, 1.0]}}


def test_predict_floats_survive_bit_exactly():
    values = [0.1, 1.0 / 3.0, 1e300, 5e-324, -0.0, math.pi]
    spec = seasonal_naive_spec(len(values))
    reply = answers(spec, [request(1, "predict", {"context": values, "horizon": len(values)})])[0]
    got = reply["payload"]["point"]
    assert struct.pack(f"<{len(values)}d", *got) == struct.pack(f"<{len(values)}d", *values)


def test_predict_validation_errors():
    spec = seasonal_naive_spec(2)
    cases = [
        {"horizon": 3},                                         # no context
        {"context": [1, 2], "horizon": 0},                      # horizon too small
        {"context": [1, 2], "horizon": 2.5},                    # horizon not an int
        {"context": [1, "x"], "horizon": 1},                    # non-numeric value
        {"context": [], "horizon": 1},                          # empty context
        {"context": [1.0], "horizon": 1},                       # below min_input_len
        {"context": [1, 2], "horizon": 1, "seed": "zero"},      # bad seed type
    ]
    replies = answers(spec, [request(i, "predict", c) for i, c in enumerate(cases)])
    assert len(replies) == len(cases)
    for i, reply in enumerate(replies):
        assert reply["kind"] == "error", f"case {i} was accepted"
        assert reply["payload"]["code"] == ERR_BAD_REQUEST
        assert reply["id"] == i


def test_fixed_shape_constraints_are_enforced():
    spec = AdapterSpec(lambda c, h, s: [0.0] * h, model_id="fixed", input_len=4, horizon_len=2)
    replies = answers(
        spec,
        [
            request(1, "predict", {"context": [1, 2, 3], "horizon": 2}),
            request(2, "predict", {"context": [1, 2, 3, 4], "horizon": 5}),
            request(3, "predict", {"context": [1, 2, 3, 4], "horizon": 2}),
        ],
    )
    assert [r["kind"] for r in replies] == ["error", "error", "predict"]
    assert replies[0]["payload"]["code"] == ERR_BAD_REQUEST
    assert replies[1]["payload"]["code"] == ERR_BAD_REQUEST


def test_nan_in_request_is_a_parse_error():
    line = b'{"v":"1","id":1,"kind":"predict","payload":{"context":[NaN,1.0],"horizon":1}}'
    reply = answers(seasonal_naive_spec(1), [line])[0]
    assert reply["kind"] == "error"
    assert reply["payload"]["code"] == ERR_PARSE


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def test_grad_without_capability_is_refused():
    reply = answers(
        seasonal_naive_spec(2),
        [request(9, "grad", {"context": [1, 2], "y": [0.5], "loss": "mse", "direction": "untargeted"})],
    )[0]
    assert reply["id"] == 9
    assert reply["kind"] == "error"
    assert reply["payload"]["code"] == ERR_NO_CAPABILITY


def test_grad_round_trip_and_direction_flip():
    spec = toy_gradient_spec()
    base = {"context": [1.0, 2.0, 0.5], "y": [1.5], "loss": "mse"}
    replies = answers(
        spec,
        [
            request(1, "grad", dict(base, direction="untargeted")),
            request(2, "grad", dict(base, direction="targeted")),
        ],
    )
    forward = replies[0]["payload"]["gradient"]
    backward = replies[1]["payload"]["gradient"]
    assert forward == [4.0, 4.0, 4.0]
    assert backward == [-4.0, -4.0, -4.0]


def test_grad_request_validation():
    spec = toy_gradient_spec()
    cases = [
        {"context": [1.0], "y": [0.0], "loss": "mse", "direction": "sideways"},
        {"context": [1.0], "y": [0.0], "loss": 7, "direction": "untargeted"},
        {"context": [1.0], "loss": "mse", "direction": "untargeted"},
        {"context": [1.0], "y": [], "loss": "mse", "direction": "untargeted"},
    ]
    for i, payload in enumerate(cases):
        reply = answers(spec, [request(i, "grad", payload)])[0]
        assert reply["kind"] == "error", f"case {i} was accepted"
        assert reply["payload"]["code"] == ERR_BAD_REQUEST


def test_wrong_gradient_length_is_an_internal_error():
    spec = AdapterSpec(
        lambda c, h, s: [0.0] * h,
        lambda c, y, loss, d: [0.0] * (len(c) + 1),
        model_id="broken",
    )
    reply = answers(
        spec,
        [request(1, "grad", {"context": [1.0, 2.0], "y": [0.0], "loss": "mse", "direction": "untargeted"})],
    )[0]
    assert reply["kind"] == "error"
    assert reply["payload"]["code"] == ERR_INTERNAL


# ---------------------------------------------------------------------------
# Malformed input and liveness
# ---------------------------------------------------------------------------


def test_malformed_line_recovery():
    lines = [
        b'{"v":"1" garbage',
        b"",
        b"\xff\xfe not utf-8",
        request(5, "hello", {}),
    ]
    replies = answers(seasonal_naive_spec(1), lines)
    assert len(replies) == 3  # the blank line is skipped outright
    assert replies[0]["kind"] == "error"
    assert replies[0]["payload"]["code"] == ERR_PARSE
    assert replies[0]["id"] is None
    assert replies[1]["payload"]["code"] == ERR_PARSE
    assert replies[2]["kind"] == "hello"
    assert replies[2]["id"] == 5


def test_parse_error_reports_byte_offset():
    bad = '{"v":"1","id":1,"kind":"héllo" x}'.encode("utf-8")
    reply = answers(seasonal_naive_spec(1), [bad])[0]
    assert reply["payload"]["code"] == ERR_PARSE
    offset = int(reply["payload"]["message"].split("byte ")[1].split(":")[0])
    assert offset >= bad.index(b" x")


def test_envelope_shape_errors():
    lines = [
        b"[1,2,3]",
        b'{"v":"1","kind":"hello","payload":{}}',
        b'{"v":"1","id":1,"payload":{}}',
        b'{"v":"1","id":1,"kind":"hello","payload":[]}',
    ]
    for reply in answers(seasonal_naive_spec(1), lines):
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == ERR_PARSE


def test_version_mismatch_is_refused():
    line = b'{"v":"2","id":3,"kind":"hello","payload":{}}'
    reply = answers(seasonal_naive_spec(1), [line])[0]
    assert reply["kind"] == "error"
    assert reply["payload"]["code"] == ERR_VERSION


def test_unknown_kind_is_a_bad_request():
    reply = answers(seasonal_naive_spec(1), [request(2, "train", {})])[0]
    assert reply["id"] == 2
    assert reply["payload"]["code"] == ERR_BAD_REQUEST


def test_model_exception_keeps_the_loop_alive():
    def explode(context, horizon, seed):
        raise RuntimeError("flaky backend")

    spec = AdapterSpec(explode, model_id="flaky")
    replies = answers(
        spec,
        [
            request(1, "predict", {"context": [1.0], "horizon": 1}),
            request(2, "hello", {}),
        ],
    )
    assert replies[0]["kind"] == "error"
    assert replies[0]["payload"]["code"] == ERR_INTERNAL
    assert "flaky backend" in replies[0]["payload"]["message"]
    assert replies[1]["kind"] == "hello"


def test_defective_point_forecasts_are_internal_errors():
    too_short = AdapterSpec(lambda c, h, s: [0.0] * (h - 1) if h > 1 else [], model_id="short")
    nan_out = AdapterSpec(lambda c, h, s: [math.nan] * h, model_id="nan")
    for spec in (too_short, nan_out):
        reply = answers(spec, [request(1, "predict", {"context": [1.0], "horizon": 2})])[0]
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == ERR_INTERNAL


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


def test_batch_preserves_request_order():
    items = [{"context": [float(i), float(i + 1)], "horizon": 2} for i in range(4)]
    reply = answers(seasonal_naive_spec(2), [request(1, "batch_predict", {"items": items})])[0]
    assert reply["kind"] == "batch_predict"
    points = [item["point"] for item in reply["payload"]["items"]]
    assert points == [[float(i), float(i + 1)] for i in range(4)]


def test_batch_with_a_bad_item_answers_nothing():
    calls = []

    def predict(context, horizon, seed):
        calls.append(tuple(context))
        return [context[-1]] * horizon

    spec = AdapterSpec(predict, model_id="count")
    items = [
        {"context": [1.0], "horizon": 1},
        {"context": [], "horizon": 1},
        {"context": [2.0], "horizon": 1},
    ]
    reply = answers(spec, [request(1, "batch_predict", {"items": items})])[0]
    assert reply["kind"] == "error"
    assert reply["payload"]["code"] == ERR_BAD_REQUEST
    assert calls == []  # nothing ran, so the batch cannot be half-answered


def test_batch_size_limit():
    items = [{"context": [1.0], "horizon": 1}] * 3
    reply = answers(seasonal_naive_spec(1), [request(1, "batch_predict", {"items": items})], max_batch=2)[0]
    assert reply["payload"]["code"] == ERR_BAD_REQUEST
    ok = answers(seasonal_naive_spec(1), [request(1, "batch_predict", {"items": items[:2]})], max_batch=2)[0]
    assert ok["kind"] == "batch_predict"


def test_batch_payload_shape_errors():
    for payload in ({}, {"items": []}, {"items": [3]}):
        reply = answers(seasonal_naive_spec(1), [request(1, "batch_predict", payload)])[0]
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == ERR_BAD_REQUEST


# ---------------------------------------------------------------------------
# Quantile tracks
# ---------------------------------------------------------------------------


def test_quantiles_ride_along_when_declared():
    def predict(context, horizon, seed):
        point = [0.0] * horizon
        return {"point": point, "quantiles": {0.1: [-1.0] * horizon, 0.9: [1.0] * horizon}}

    spec = AdapterSpec(predict, model_id="bands", distributional=True)
    reply = answers(spec, [request(1, "predict", {"context": [1.0], "horizon": 2})])[0]
    assert reply["payload"]["quantiles"] == {"0.1": [-1.0, -1.0], "0.9": [1.0, 1.0]}


def test_undeclared_quantiles_are_a_hosting_defect():
    def predict(context, horizon, seed):
        return {"point": [0.0] * horizon, "quantiles": {0.5: [0.0] * horizon}}

    spec = AdapterSpec(predict, model_id="sneaky")  # distributional not declared
    reply = answers(spec, [request(1, "predict", {"context": [1.0], "horizon": 1})])[0]
    assert reply["kind"] == "error"
    assert reply["payload"]["code"] == ERR_INTERNAL


# ---------------------------------------------------------------------------
# Spec validation
# ---------------------------------------------------------------------------


def test_adapter_spec_rejects_bad_arguments():
    ok = lambda c, h, s: [0.0] * h  # noqa: E731
    with pytest.raises(ValueError):
        AdapterSpec("not callable")
    with pytest.raises(ValueError):
        AdapterSpec(ok, gradient_fn="nope")
    with pytest.raises(ValueError):
        AdapterSpec(ok, model_id="")
    with pytest.raises(ValueError):
        AdapterSpec(ok, min_input_len=0)
    with pytest.raises(ValueError):
        AdapterSpec(ok, input_len=0)
    with pytest.raises(ValueError):
        AdapterSpec(ok, input_len=3, min_input_len=5)
    with pytest.raises(ValueError):
        seasonal_naive_spec(0)
    with pytest.raises(TypeError):
        serve(object(), io.BytesIO(), io.BytesIO())
