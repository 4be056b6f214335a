import copy
import json
import os

import numpy as np
import pytest

from tsrobust import (
    AttackConfig,
    Budget,
    ConfigError,
    Direction,
    EvalRecord,
    ExperimentConfig,
    InvalidInput,
    LinearAR,
    MLPForecaster,
    MetricKind,
    NoGradientCapability,
    RECORD_COLUMNS,
    SeasonalNaive,
    TimeSeries,
    Window,
    build_model,
    curves_from_records,
    decomposition_consistency,
    emit_report,
    evaluate_window,
    evaluate_window_outcome,
    flipping,
    localize_vulnerability,
    scaling,
    parse_records_csv,
    run_grid,
    summarize_records,
    trajectory_entries,
    transfer_eval,
    windows_from_series,
)


def sine_series(n=200, seed=0, sid="s"):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    vals = 20 + 10 * np.sin(2 * np.pi * t / 12) + 0.05 * t + rng.normal(0, 0.5, n)
    return TimeSeries(vals, id=sid)


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------


def test_windows_come_from_the_tail_most_recent_first():
    series = TimeSeries(np.arange(100.0), id="t")
    wins = windows_from_series(series, context_len=8, horizon=2, count=3)
    assert [w.origin_index for w in wins] == [90, 80, 70]
    assert np.array_equal(wins[0].context, np.arange(90.0, 98.0))
    assert np.array_equal(wins[0].truth, [98.0, 99.0])
    assert np.array_equal(wins[2].truth, [78.0, 79.0])


def test_windows_stop_when_series_is_exhausted():
    series = TimeSeries(np.arange(25.0))
    wins = windows_from_series(series, context_len=8, horizon=2, count=10)
    assert len(wins) == 2
    with pytest.raises(InvalidInput):
        windows_from_series(series, 0, 2)


# ---------------------------------------------------------------------------
# Single-window evaluation
# ---------------------------------------------------------------------------


def test_constant_window_is_skipped_as_degenerate():
    model = SeasonalNaive(period=1)
    rec = evaluate_window(
        model, Window(np.full(8, 5.0), 2), AttackConfig(method="fgsm"), Budget(epsilon=0.5, ratio=1.0)
    )
    assert rec.skipped_degenerate
    assert rec.queries == 0
    assert np.isnan(rec.e_clean) and np.isnan(rec.e_adv) and np.isnan(rec.red)
    assert rec.flags == ("zero-variance",)
    assert rec.reference == ""


def test_untargeted_gradient_attack_from_zero_leaves_forecast_unchanged():
    # with the clean forecast as the pull-away reference, the loss gradient
    # at an unperturbed input vanishes, so one sign step moves nothing
    model = LinearAR(weights=np.array([1.0]))
    w = Window([1.0, 2.0, 4.0], horizon=1, truth=[5.0])
    rec = evaluate_window(model, w, AttackConfig(method="fgsm"), Budget(epsilon=0.5, ratio=1.0))
    assert rec.red == 0.0
    assert rec.e_clean == rec.e_adv
    assert rec.reference == "truth"
    assert not rec.skipped_degenerate


def test_targeted_evaluation_matches_closed_form_on_naive_last():
    model = LinearAR(weights=np.array([1.0]))
    ctx = np.array([0.0, 4.0, 2.0])
    w = Window(ctx, horizon=1)
    eps = 0.3
    eps_star = eps * float(np.var(ctx))
    spec = scaling(2.0)  # target is 2x the clean forecast
    rec = evaluate_window(
        model,
        w,
        AttackConfig(method="pgd", iterations=300, step_size=0.05),
        Budget(epsilon=eps, ratio=1.0),
        direction=Direction.TARGETED,
        target_spec=spec,
    )
    # clean forecast 2, target 4; the optimum moves the last value up by eps*
    e_clean = abs(2.0 - 4.0) / 4.0
    e_adv = abs(2.0 + eps_star - 4.0) / 4.0
    assert rec.reference == "target"
    assert rec.e_clean == pytest.approx(e_clean, rel=1e-12)
    assert rec.e_adv == pytest.approx(e_adv, rel=1e-6)
    assert rec.red == pytest.approx((e_clean - e_adv) / (e_clean + 1e-8), rel=1e-5)
    assert rec.red > 0


def test_targeted_requires_target_spec():
    with pytest.raises(InvalidInput):
        evaluate_window(
            SeasonalNaive(period=1),
            Window([1.0, 2.0], 1),
            AttackConfig(),
            Budget(epsilon=0.5, ratio=1.0),
            direction=Direction.TARGETED,
        )


def test_outcome_carries_trajectories():
    model = LinearAR(weights=np.array([1.0]))
    w = Window([1.0, 2.0, 4.0], horizon=1, truth=[5.0])
    out = evaluate_window_outcome(
        model, w, AttackConfig(method="simba", iterations=10, seed=0), Budget(epsilon=0.5, ratio=1.0)
    )
    assert out.clean_forecast.shape == (1,)
    assert out.adv_forecast.shape == (1,)
    assert out.target is None
    assert out.result.delta.shape == (3,)
    entries = trajectory_entries([out])
    assert len(entries) == 1
    assert len(entries[0]["delta"]) == 3


# ---------------------------------------------------------------------------
# Grid runs
# ---------------------------------------------------------------------------


def grid_config(**overrides):
    base = dict(
        context_len=16,
        horizon=4,
        windows_per_series=1,
        models=({"type": "linear_ar"},),
        attacks=(AttackConfig(method="simba", iterations=10),),
        epsilons=(0.25, 0.5),
        ratios=(0.5, 1.0),
        seed=3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_run_grid_emits_one_record_per_cell():
    cfg = grid_config()
    result = run_grid(cfg, series=[sine_series(seed=1)])
    assert len(result.records) == 4  # 1 model x 1 window x 2 eps x 2 ratios x 1 attack
    assert not result.partial
    assert result.summary["records"] == 4
    assert result.summary["live"] == 4
    assert {r.epsilon for r in result.records} == {0.25, 0.5}
    assert len(result.curves) == 4
    for row in result.curves:
        assert row["n"] == 1


def test_run_grid_is_deterministic_at_the_byte_level(tmp_path):
    cfg = grid_config(models=({"type": "seasonal_naive", "period": 4},))
    series = [sine_series(seed=2, sid="a"), sine_series(seed=3, sid="b")]
    r1 = run_grid(cfg, series=series)
    r2 = run_grid(cfg, series=series)
    p1 = emit_report(r1.records, str(tmp_path / "one"), summary=r1.summary, curves=r1.curves)
    p2 = emit_report(r2.records, str(tmp_path / "two"), summary=r2.summary, curves=r2.curves)
    for key in ("records", "summary", "curves"):
        with open(p1[key], "rb") as fa, open(p2[key], "rb") as fb:
            assert fa.read() == fb.read()


def test_run_grid_fails_soft_per_cell():
    # the MLP expects a different context length, so every evaluation fails
    cfg = grid_config(
        models=(
            {"type": "linear_ar"},
            {"type": "mlp", "input_len": 99, "horizon": 4, "hidden_dim": 4},
        )
    )
    result = run_grid(cfg, series=[sine_series(seed=4)])
    assert result.partial
    failed = [r for r in result.records if r.failed]
    assert len(failed) == 4
    assert all(any(f.startswith("error:") for f in r.flags) for r in failed)
    live = [r for r in result.records if r.live]
    assert len(live) == 4
    assert result.summary["failed"] == 4


def test_run_grid_requires_fitting_windows():
    cfg = grid_config(context_len=500)
    with pytest.raises(ConfigError):
        run_grid(cfg, series=[sine_series(n=100)])


def test_experiment_config_round_trip_and_validation():
    cfg = grid_config(
        direction=Direction.TARGETED,
        target=flipping(-1.0),
        models=({"type": "seasonal_naive", "period": 6},),
    )
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"colour": "mauve"})
    with pytest.raises(ConfigError):
        grid_config(ratios=(0.0,))
    with pytest.raises(ConfigError):
        grid_config(models=())
    with pytest.raises(ConfigError):
        grid_config(direction=Direction.TARGETED)


def test_build_model_specs():
    ar = build_model({"type": "linear_ar", "weights": [0.5, 0.5]})
    assert isinstance(ar, LinearAR)
    sm = build_model({"type": "smoothed", "inner": {"type": "linear_ar"}, "kernel": 3})
    assert sm.model_id.endswith("+smooth3")
    with pytest.raises(ConfigError):
        build_model({"type": "warp-drive"})
    with pytest.raises(ConfigError):
        build_model({"no_type": True})
    with pytest.raises(ConfigError):
        build_model({"type": "mlp", "hidden_dim": 4})  # lacks dimensions


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def test_localization_puts_all_mass_on_the_final_position_for_naive_last():
    model = LinearAR(weights=np.array([1.0]))
    rng = np.random.default_rng(5)
    wins = [Window(rng.normal(size=12), 3, truth=rng.normal(size=3)) for _ in range(7)]
    counts = localize_vulnerability(model, wins, k=4)
    assert counts[-1] == 7
    assert counts[:-1].sum() == 0


def test_localization_marks_everything_when_k_covers_dense_gradients():
    model = MLPForecaster.initialize(10, 6, 2, seed=0)
    rng = np.random.default_rng(6)
    wins = [Window(rng.normal(size=10), 2, truth=rng.normal(size=2)) for _ in range(5)]
    counts = localize_vulnerability(model, wins, k=10)
    assert np.array_equal(counts, np.full(10, 5))


def test_localization_flat_gradient_falls_back_to_recency():
    model = LinearAR(weights=np.array([0.0, 0.0]), intercept=1.0)
    wins = [Window([1.0, 2.0, 3.0, 4.0], 1, truth=[9.0])]
    counts = localize_vulnerability(model, wins, k=2)
    assert np.array_equal(counts, [0, 0, 1, 1])


def test_localization_requires_gradients():
    with pytest.raises(NoGradientCapability):
        localize_vulnerability(SeasonalNaive(period=1), [Window([1.0, 2.0], 1)], k=1)


def test_decomposition_identity_and_flip():
    x = sine_series(n=120, seed=7).values
    same = decomposition_consistency(x, x, period=12)
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in same.values())
    flipped = decomposition_consistency(x, -x, period=12)
    assert all(v == pytest.approx(-1.0, abs=1e-12) for v in flipped.values())
    shifted = decomposition_consistency(x, x + 100.0, period=12)
    assert all(v == pytest.approx(1.0, abs=1e-9) for v in shifted.values())


def test_decomposition_handles_constant_components():
    const = np.full(40, 3.0)
    same = decomposition_consistency(const, const, period=4)
    assert same["trend_corr"] == 1.0
    other = decomposition_consistency(const, np.full(40, 8.0), period=4)
    assert np.isnan(other["trend_corr"])


def test_decomposition_validation():
    x = np.arange(30.0)
    with pytest.raises(InvalidInput):
        decomposition_consistency(x, x[:-1], period=4)
    with pytest.raises(InvalidInput):
        decomposition_consistency(x, x, period=1)
    with pytest.raises(InvalidInput):
        decomposition_consistency(x[:6], x[:6], period=4)


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------


def test_transfer_to_self_reuses_the_direct_record():
    model = LinearAR(weights=np.array([1.0]))
    rng = np.random.default_rng(8)
    wins = [Window(rng.normal(size=8), 2, truth=rng.normal(size=2)) for _ in range(3)]
    cfg = AttackConfig(method="simba", iterations=15, seed=2)
    budget = Budget(epsilon=0.5, ratio=0.5)
    table = transfer_eval(model, [model], cfg, budget, wins)
    direct = [evaluate_window(model, w, cfg, budget) for w in wins]
    assert [r.to_row() for r in table[model.model_id]] == [r.to_row() for r in direct]


def test_transfer_to_inert_target_changes_nothing():
    source = LinearAR(weights=np.array([1.0]))
    # the target reads only the second-to-last value, which a 1-position
    # budget mask never touches
    target = LinearAR(weights=np.array([1.0, 0.0]), model_id="lagged")
    rng = np.random.default_rng(9)
    wins = [Window(rng.normal(size=8), 1, truth=rng.normal(size=1)) for _ in range(2)]
    cfg = AttackConfig(method="simba", iterations=10, seed=0)
    budget = Budget(epsilon=0.5, ratio=1.0 / 8.0)  # exactly one position
    table = transfer_eval(source, [source, target], cfg, budget, wins)
    for rec in table["lagged"]:
        assert rec.red == 0.0
        assert rec.queries == 2
        assert any(f == f"transfer-from:{source.model_id}" for f in rec.flags)


def test_transfer_validates_targets():
    model = LinearAR(weights=np.array([1.0]))
    w = Window(np.arange(8.0), 1)
    cfg = AttackConfig(method="simba", iterations=5)
    with pytest.raises(ConfigError):
        transfer_eval(model, [model, LinearAR(weights=np.array([1.0]))], cfg, Budget(0.5, 1.0), [w])
    wrong_len = MLPForecaster.initialize(16, 4, 1, seed=0)
    with pytest.raises(ConfigError):
        transfer_eval(model, [wrong_len], cfg, Budget(0.5, 1.0), [w])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def test_report_round_trip_preserves_every_row(tmp_path):
    cfg = grid_config(
        models=(
            {"type": "linear_ar"},
            {"type": "mlp", "input_len": 99, "horizon": 4, "hidden_dim": 4},
        )
    )
    result = run_grid(cfg, series=[sine_series(seed=10)])
    paths = emit_report(result.records, str(tmp_path / "out"), summary=result.summary)
    parsed = parse_records_csv(paths["records"])
    assert [r.to_row() for r in parsed] == [r.to_row() for r in result.records]
    with open(paths["records"], encoding="utf-8") as fh:
        assert fh.readline().rstrip("\n") == ",".join(RECORD_COLUMNS)


def test_summary_config_echo_round_trips(tmp_path):
    cfg = grid_config()
    result = run_grid(cfg, series=[sine_series(seed=11)])
    paths = emit_report(result.records, str(tmp_path / "rep"), summary=result.summary)
    with open(paths["summary"], encoding="utf-8") as fh:
        summary = json.load(fh)
    echoed = ExperimentConfig.from_dict(summary["config"])
    assert echoed == cfg
    assert summary["seed"] == cfg.seed
    assert summary["partial"] is False


def test_summarize_micro_macro_weighting():
    def rec(dataset, red):
        return EvalRecord(
            model_id="m",
            dataset_id=dataset,
            window_origin=0,
            epsilon=0.5,
            ratio=1.0,
            method="pgd",
            direction="untargeted",
            metric="nmae",
            reference="clean",
            e_clean=1.0,
            e_adv=1.0 + red,
            red=red,
            queries=1,
            skipped_degenerate=False,
            flags=(),
        )

    records = [rec("a", 1.0), rec("a", 1.0), rec("a", 1.0), rec("b", 0.0)]
    summary = summarize_records(records)
    assert summary["mean_micro"] == pytest.approx(0.75)
    assert summary["mean_macro"] == pytest.approx(0.5)
    curves = curves_from_records(records)
    assert len(curves) == 1 and curves[0]["n"] == 4


def test_emit_report_rejects_empty_input(tmp_path):
    with pytest.raises(InvalidInput):
        emit_report([], str(tmp_path))
