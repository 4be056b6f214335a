import numpy as np
import pytest

from tsrobust import (
    AdvTrainConfig,
    DivergedTraining,
    InvalidInput,
    LossKind,
    MLPForecaster,
    NoGradientCapability,
    NotTrainable,
    SeasonalNaive,
    SmoothingConfig,
    SmoothingWrapper,
    Window,
    dataset_fingerprint,
    finetune,
    iat_finetune,
    lat_finetune,
    smooth,
)
from tsrobust.forecasters import Direction


def brute_force_smooth(x, k):
    return np.array([np.mean(x[max(0, j - k + 1) : j + 1]) for j in range(len(x))])


def make_dataset(n, input_len, horizon, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ctx = rng.normal(size=input_len)
        out.append(Window(ctx, horizon, truth=rng.normal(size=horizon)))
    return out


# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------


def test_smooth_hand_example():
    out = smooth([1.0, 2.0, 3.0, 4.0], 3)
    assert np.array_equal(out, [1.0, 1.5, 2.0, 3.0])


def test_smooth_kernel_one_is_identity_copy():
    x = np.array([3.0, -1.0, 2.0])
    out = smooth(x, 1)
    assert np.array_equal(out, x)
    out[0] = 99.0
    assert x[0] == 3.0


def test_smooth_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        k = int(rng.integers(1, 12))
        x = rng.normal(size=n)
        assert np.allclose(smooth(x, k), brute_force_smooth(x, k), atol=1e-12)


def test_smooth_rejects_bad_inputs():
    with pytest.raises(InvalidInput):
        smooth([], 3)
    with pytest.raises(InvalidInput):
        smooth([1.0, float("nan")], 3)
    with pytest.raises(InvalidInput):
        SmoothingConfig(0)


def test_smoothing_wrapper_predicts_on_smoothed_context():
    inner = SeasonalNaive(period=2)
    wrapped = SmoothingWrapper(inner, kernel=3)
    w = Window([1.0, 2.0, 3.0, 4.0], horizon=2)
    direct = inner.predict(Window(smooth(w.context, 3), 2))
    assert np.array_equal(wrapped.predict(w).point, direct.point)
    assert wrapped.model_id == inner.model_id + "+smooth3"


def test_smoothing_wrapper_capability_mask():
    inner = MLPForecaster.initialize(8, 4, 2, seed=0)
    wrapped = SmoothingWrapper(inner, kernel=2)
    caps = wrapped.capabilities
    assert caps.gradient
    assert not caps.latent
    assert not caps.trainable


def test_smoothing_wrapper_gradient_matches_finite_differences():
    inner = MLPForecaster.initialize(10, 6, 3, seed=1)
    wrapped = SmoothingWrapper(inner, kernel=4)
    rng = np.random.default_rng(2)
    w = Window(rng.normal(size=10), horizon=3)
    ref = rng.normal(size=3)
    grad = wrapped.input_gradient(w, ref, LossKind.MSE, Direction.UNTARGETED)
    h = 1e-6
    for i in range(10):
        e = np.zeros(10)
        e[i] = h
        up = wrapped.predict(Window(w.context + e, 3)).point
        dn = wrapped.predict(Window(w.context - e, 3)).point
        fd = (np.mean((up - ref) ** 2) - np.mean((dn - ref) ** 2)) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)


# ---------------------------------------------------------------------------
# Fingerprint and config
# ---------------------------------------------------------------------------


def test_dataset_fingerprint_sensitivity():
    d1 = make_dataset(3, 6, 2, seed=0)
    d2 = make_dataset(3, 6, 2, seed=0)
    assert dataset_fingerprint(d1) == dataset_fingerprint(d2)
    assert dataset_fingerprint(d1) != dataset_fingerprint(list(reversed(d1)))
    d3 = [Window(w.context, w.horizon, truth=w.truth + 1) for w in d1]
    assert dataset_fingerprint(d1) != dataset_fingerprint(d3)


def test_adv_train_config_validation_and_round_trip():
    cfg = AdvTrainConfig(mode="iat", epsilon=0.25, epochs=2)
    d = cfg.to_dict()
    assert d["mode"] == "iat" and d["epsilon"] == 0.25
    with pytest.raises(InvalidInput):
        AdvTrainConfig(mode="xyz")
    with pytest.raises(InvalidInput):
        AdvTrainConfig(epsilon=-1.0)
    with pytest.raises(InvalidInput):
        AdvTrainConfig(batch=0)
    with pytest.raises(InvalidInput):
        AdvTrainConfig(outer_lr=0.0)


# ---------------------------------------------------------------------------
# Fine-tuning
# ---------------------------------------------------------------------------


def test_lat_with_zero_epsilon_matches_plain_tuning_exactly():
    model = MLPForecaster.initialize(8, 5, 2, seed=3)
    data = make_dataset(40, 8, 2, seed=4)
    cfg = AdvTrainConfig(mode="lat", epsilon=0.0, epochs=2, batch=16, seed=5)
    lat_model, lat_hist = lat_finetune(model, data, cfg)
    plain_model, plain_hist = finetune(model, data, cfg)
    assert lat_hist == plain_hist
    lp, pp = lat_model._params(), plain_model._params()
    for key in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(lp[key], pp[key])
    assert lat_model.model_id.endswith("+lat")
    assert plain_model.model_id.endswith("+tuned")


def test_lat_and_iat_run_and_change_parameters():
    model = MLPForecaster.initialize(8, 5, 2, seed=6)
    data = make_dataset(30, 8, 2, seed=7)
    for fn, mode, suffix in ((lat_finetune, "lat", "+lat"), (iat_finetune, "iat", "+iat")):
        cfg = AdvTrainConfig(mode=mode, epsilon=0.3, epochs=2, batch=10, seed=8, outer_lr=1e-3)
        tuned, hist = fn(model, data, cfg)
        assert len(hist) == 2
        assert tuned.model_id == model.model_id + suffix
        assert not np.array_equal(tuned._params()["w1"], model._params()["w1"])
        # the original model is untouched
        pred = model.predict(data[0])
        assert np.all(np.isfinite(pred.point))


def test_finetune_is_seed_deterministic():
    model = MLPForecaster.initialize(6, 4, 1, seed=9)
    data = make_dataset(20, 6, 1, seed=10)
    cfg = AdvTrainConfig(mode="lat", epsilon=0.2, epochs=2, batch=8, seed=11)
    m1, h1 = lat_finetune(model, data, cfg)
    m2, h2 = lat_finetune(model, data, cfg)
    assert h1 == h2
    assert np.array_equal(m1._params()["w1"], m2._params()["w1"])


def test_finetune_gates_on_capabilities():
    data = make_dataset(4, 4, 1, seed=0)
    cfg = AdvTrainConfig(mode="lat", epochs=1)
    with pytest.raises(NotTrainable):
        lat_finetune(SeasonalNaive(period=2), data, cfg)


def test_mode_mismatch_is_rejected():
    model = MLPForecaster.initialize(4, 3, 1, seed=0)
    data = make_dataset(4, 4, 1, seed=1)
    with pytest.raises(InvalidInput):
        lat_finetune(model, data, AdvTrainConfig(mode="iat", epochs=1))
    with pytest.raises(InvalidInput):
        iat_finetune(model, data, AdvTrainConfig(mode="lat", epochs=1))


def test_dataset_shape_mismatch_is_rejected():
    model = MLPForecaster.initialize(6, 3, 2, seed=0)
    data = make_dataset(4, 5, 2, seed=1)
    with pytest.raises(InvalidInput):
        finetune(model, data, AdvTrainConfig(epochs=1))


def test_divergence_raises_with_history():
    model = MLPForecaster.initialize(6, 4, 2, seed=12)
    data = make_dataset(32, 6, 2, seed=13)
    cfg = AdvTrainConfig(mode="plain", epochs=20, batch=8, seed=14, outer_lr=1e6)
    with pytest.raises(DivergedTraining) as exc:
        finetune(model, data, cfg)
    assert len(exc.value.history) >= 1
    assert not np.isfinite(exc.value.history[-1]) or exc.value.history[-1] > 1e5
