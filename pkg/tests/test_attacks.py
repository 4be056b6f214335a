import math

import numpy as np
import pytest

from tsrobust import (
    AttackConfig,
    AttackObjective,
    Budget,
    Capabilities,
    Direction,
    EffectiveBudget,
    ForecastDistribution,
    ForecastModel,
    InvalidInput,
    LinearAR,
    LossKind,
    QueryLimitExceeded,
    SeasonalNaive,
    Window,
    effective_budget,
    fgsm,
    pgd,
    run_attack,
    simba_attack,
    zoo_attack,
    zoo_gradient,
)


class CountingModel(ForecastModel):
    """Forwarding proxy that tallies raw prediction calls."""

    def __init__(self, inner):
        self.inner = inner
        self.model_id = inner.model_id
        self.input_len = inner.input_len
        self.min_input_len = inner.min_input_len
        self.horizon_len = inner.horizon_len
        self.predict_calls = 0

    @property
    def capabilities(self):
        return self.inner.capabilities

    def predict(self, window, seed=None):
        self.predict_calls += 1
        return self.inner.predict(window, seed=seed)

    def input_gradient(self, window, reference, loss_kind, direction):
        return self.inner.input_gradient(window, reference, loss_kind, direction)


class CubicModel(ForecastModel):
    """Scalar polynomial response; analytic derivatives for estimator oracles."""

    model_id = "cubic"
    horizon_len = 1

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)  # rows of (a, b, c)

    def predict(self, window, seed=None):
        x = window.context
        a, b, c = self.coeffs[:, 0], self.coeffs[:, 1], self.coeffs[:, 2]
        val = float(np.sum(a * x**3 + b * x**2 + c * x))
        return ForecastDistribution(point=np.array([val]))

    def response_grad(self, x):
        a, b, c = self.coeffs[:, 0], self.coeffs[:, 1], self.coeffs[:, 2]
        return 3 * a * x**2 + 2 * b * x + c


def naive_last():
    return LinearAR(weights=np.array([1.0]))


def budget_for(window, epsilon=1.0, ratio=1.0):
    return effective_budget(Budget(epsilon=epsilon, ratio=ratio), window)


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def test_objective_counts_queries_and_tracks_forecast():
    model = CountingModel(naive_last())
    w = Window([1.0, 2.0], horizon=1, truth=[4.0])
    obj = AttackObjective(model, w, reference=[4.0])
    v = obj.eval(np.zeros(2))
    assert v == pytest.approx((2.0 - 4.0) ** 2, abs=0)
    assert obj.predict_queries == 1 == model.predict_calls
    assert np.array_equal(obj.last_forecast, [2.0])


def test_objective_sign_flips_for_targeted():
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    ref = [5.0]
    up = AttackObjective(model, w, ref, direction=Direction.UNTARGETED)
    down = AttackObjective(model, w, ref, direction=Direction.TARGETED)
    d = np.array([0.0, 0.5])
    assert up.eval(d) == -down.eval(d)


def test_objective_query_limit_is_exact():
    obj = AttackObjective(naive_last(), Window([1.0, 2.0], 1), [0.0])
    obj.arm_query_limit(2)
    obj.eval(np.zeros(2))
    obj.eval(np.zeros(2))
    with pytest.raises(QueryLimitExceeded):
        obj.eval(np.zeros(2))
    assert obj.predict_queries == 2


def test_objective_validates_reference():
    with pytest.raises(InvalidInput):
        AttackObjective(naive_last(), Window([1.0, 2.0], 1), [1.0, 2.0])
    with pytest.raises(InvalidInput):
        AttackObjective(naive_last(), Window([1.0, 2.0], 1), [float("nan")])


# ---------------------------------------------------------------------------
# FGSM
# ---------------------------------------------------------------------------


def test_fgsm_is_one_projected_sign_step():
    model = naive_last()
    x = np.array([0.0, 0.0, 2.0])
    w = Window(x, horizon=1)
    eb = budget_for(w, epsilon=0.3)  # step bound = 0.3 * var(x)
    obj = AttackObjective(model, w, reference=[1.0])
    res = fgsm(obj, eb)
    # gradient at zero pushes the last value away from the reference (2 > 1)
    expected = np.zeros(3)
    expected[2] = eb.step_bound
    assert np.array_equal(res.delta, expected)
    assert res.converged
    assert res.queries_used == 1
    assert res.objective_trace.shape == (1,)
    assert res.objective_trace[0] == pytest.approx((2.0 + eb.step_bound - 1.0) ** 2, rel=1e-15)


def test_fgsm_respects_mask():
    model = naive_last()
    w = Window([5.0, 1.0, 2.0, 3.0], horizon=1)
    eb = EffectiveBudget(step_bound=0.5, mask=np.array([0, 1]), length=4)
    obj = AttackObjective(model, w, reference=[0.0])
    res = fgsm(obj, eb)
    # the model only reads position 3, which the mask excludes
    assert np.all(res.delta[[2, 3]] == 0.0)
    assert np.all(np.abs(res.delta) <= 0.5)


# ---------------------------------------------------------------------------
# PGD
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("eps_star", [0.1, 0.3, 0.5])
def test_pgd_reaches_closed_form_optimum_on_naive_last(eps_star):
    model = naive_last()
    x = np.array([1.0, 2.0, 3.0])
    w = Window(x, horizon=1)
    eb = EffectiveBudget(step_bound=eps_star, mask=np.array([2]), length=3)
    ref = 2.2  # differs from the clean forecast, so the ascent moves
    obj = AttackObjective(model, w, reference=[ref])
    res = pgd(obj, eb, AttackConfig(method="pgd", step_size=0.05, iterations=300))
    optimum = (abs(x[2] - ref) + eps_star) ** 2
    assert max(res.objective_trace) >= 0.99 * optimum
    assert max(res.objective_trace) == pytest.approx(optimum, rel=1e-12)
    assert res.converged


def test_pgd_returns_best_evaluated_iterate():
    model = naive_last()
    w = Window([0.0, 1.0], horizon=1)
    eb = EffectiveBudget(step_bound=0.2, mask=np.array([1]), length=2)
    obj = AttackObjective(model, w, reference=[0.5])
    res = pgd(obj, eb, AttackConfig(iterations=40))
    value_at_delta = (1.0 + res.delta[1] - 0.5) ** 2
    assert value_at_delta == pytest.approx(float(np.max(res.objective_trace)), rel=1e-12)


def test_pgd_stationary_at_zero_without_random_start():
    # reference equal to the clean forecast zeroes the gradient at zero
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=1.0)
    obj = AttackObjective(model, w, reference=model.predict(w).point)
    res = pgd(obj, eb, AttackConfig(iterations=20))
    assert np.array_equal(res.delta, np.zeros(2))

    # a seeded random start escapes the stationary point
    obj2 = AttackObjective(model, w, reference=model.predict(w).point)
    res2 = pgd(obj2, eb, AttackConfig(iterations=20, random_start=True, seed=1))
    assert float(np.max(res2.objective_trace)) > 0.0


def test_pgd_random_start_is_seed_deterministic():
    model = naive_last()
    w = Window([1.0, 4.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=0.5)
    cfg = AttackConfig(iterations=15, random_start=True, seed=9)
    r1 = pgd(AttackObjective(model, w, [0.0]), eb, cfg)
    r2 = pgd(AttackObjective(model, w, [0.0]), eb, cfg)
    assert np.array_equal(r1.delta, r2.delta)
    assert np.array_equal(r1.objective_trace, r2.objective_trace)


def test_pgd_truncates_gracefully_on_query_limit():
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=1.0)
    obj = AttackObjective(model, w, reference=[0.0])
    res = pgd(obj, eb, AttackConfig(iterations=50, query_limit=5))
    assert not res.converged
    assert res.queries_used == 5
    assert len(res.objective_trace) == 5


# ---------------------------------------------------------------------------
# ZOO
# ---------------------------------------------------------------------------


def cubic_setup(seed=0):
    rng = np.random.default_rng(seed)
    L = 4
    model = CubicModel(rng.normal(size=(L, 3)))
    x = rng.normal(size=L) * 0.5
    w = Window(x, horizon=1)
    y = float(rng.normal())
    obj = AttackObjective(model, w, reference=[y])
    return model, w, y, obj


def test_zoo_gradient_second_order_accuracy():
    worst_order = math.inf
    for seed in range(10):
        model, w, y, obj = cubic_setup(seed)
        rng = np.random.default_rng(100 + seed)
        delta = rng.normal(size=4) * 0.1
        p = model.predict(w.perturbed(delta)).point[0]
        exact = 2.0 * (p - y) * model.response_grad(w.context + delta)
        for i in range(4):
            e1 = abs(zoo_gradient(obj, delta, i, 1e-2) - exact[i])
            e2 = abs(zoo_gradient(obj, delta, i, 1e-3) - exact[i])
            if e2 < 1e-12:  # too exact to measure an order
                continue
            order = math.log10(e1 / e2)
            worst_order = min(worst_order, order)
    assert worst_order >= 1.9


def test_zoo_gradient_validates_inputs():
    _, _, _, obj = cubic_setup()
    with pytest.raises(InvalidInput):
        zoo_gradient(obj, np.zeros(4), 4, 1e-3)
    with pytest.raises(InvalidInput):
        zoo_gradient(obj, np.zeros(4), 0, 0.0)


def test_zoo_attack_query_accounting_and_trace():
    model = CountingModel(naive_last())
    w = Window([1.0, 2.0, 3.0, 4.0], horizon=1)
    obj = AttackObjective(model, w, reference=[0.0])
    eb = budget_for(w, epsilon=0.5, ratio=0.5)  # mask is the last 2 positions
    iters = 7
    res = zoo_attack(obj, eb, AttackConfig(method="zoo", iterations=iters, step_size=0.1))
    assert res.queries_used == 2 * 2 * iters + 1
    assert model.predict_calls == res.queries_used
    assert len(res.objective_trace) == iters + 1
    assert res.converged
    assert np.all(np.abs(res.delta) <= eb.step_bound)
    assert np.all(res.delta[:2] == 0.0)


def test_zoo_attack_improves_on_naive_last():
    model = naive_last()
    w = Window([1.0, 3.0], horizon=1)
    eb = EffectiveBudget(step_bound=0.4, mask=np.array([1]), length=2)
    obj = AttackObjective(model, w, reference=[2.0])
    res = zoo_attack(obj, eb, AttackConfig(method="zoo", iterations=30, step_size=0.2))
    # optimum pushes the final value up to the bound
    assert res.delta[1] == pytest.approx(0.4, abs=1e-9)
    assert res.objective_trace[-1] == pytest.approx((3.4 - 2.0) ** 2, rel=1e-12)


def test_zoo_adam_variant_runs_and_projects():
    model = naive_last()
    w = Window([1.0, 3.0], horizon=1)
    eb = EffectiveBudget(step_bound=0.4, mask=np.array([1]), length=2)
    obj = AttackObjective(model, w, reference=[2.0])
    res = zoo_attack(obj, eb, AttackConfig(method="zoo_adam", iterations=50, step_size=0.1))
    assert np.all(np.abs(res.delta) <= 0.4 + 1e-15)
    assert res.delta[1] > 0.3


def test_zoo_coord_batch_subsamples_deterministically():
    model = CountingModel(naive_last())
    w = Window(np.arange(6.0), horizon=1)
    obj = AttackObjective(model, w, reference=[0.0])
    eb = budget_for(w, epsilon=0.5, ratio=1.0)
    cfg = AttackConfig(method="zoo", iterations=3, coord_batch=2, seed=11)
    res = zoo_attack(obj, eb, cfg)
    assert res.queries_used == 2 * 2 * 3 + 1
    obj2 = AttackObjective(naive_last(), w, reference=[0.0])
    res2 = zoo_attack(obj2, eb, cfg)
    assert np.array_equal(res.delta, res2.delta)


def test_zoo_truncation_returns_best_proxy_iterate():
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=1.0)
    obj = AttackObjective(model, w, reference=[0.0])
    # enough for 2 full iterations (4 queries each... here mask=2 coords -> 4/iter)
    res = zoo_attack(obj, eb, AttackConfig(method="zoo", iterations=10, query_limit=9))
    assert not res.converged
    assert res.queries_used <= 9


# ---------------------------------------------------------------------------
# SimBA
# ---------------------------------------------------------------------------


def test_simba_trace_is_monotone_and_deterministic():
    model = SeasonalNaive(period=2)
    rng = np.random.default_rng(2)
    w = Window(rng.normal(size=8), horizon=2, truth=rng.normal(size=2))
    eb = budget_for(w, epsilon=0.8)
    cfg = AttackConfig(method="simba", iterations=30, step_size=0.3, seed=4)
    r1 = simba_attack(AttackObjective(model, w, w.truth), eb, cfg)
    r2 = simba_attack(AttackObjective(model, w, w.truth), eb, cfg)
    assert np.all(np.diff(r1.objective_trace) >= 0)
    assert np.array_equal(r1.delta, r2.delta)
    assert np.array_equal(r1.objective_trace, r2.objective_trace)
    assert r1.converged


def test_simba_respects_mask_support():
    model = SeasonalNaive(period=2)
    w = Window(np.array([1.0, 2.0, 3.0, 4.0]), horizon=1)
    eb = EffectiveBudget(step_bound=0.5, mask=np.array([3]), length=4)
    obj = AttackObjective(model, w, reference=[0.0])
    res = simba_attack(obj, eb, AttackConfig(method="simba", iterations=10, step_size=0.2))
    assert np.all(res.delta[:3] == 0.0)


def test_simba_accepts_only_strict_improvements():
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=0.6)
    obj = AttackObjective(model, w, reference=[2.0])  # objective zero at zero
    res = simba_attack(obj, eb, AttackConfig(method="simba", iterations=4, step_size=0.25))
    # any accepted step must strictly raise the trace
    diffs = np.diff(res.objective_trace)
    assert np.all(diffs >= 0)
    assert res.objective_trace[-1] > 0  # some direction moved the last value


def test_simba_dct_basis_support_restricted():
    model = naive_last()
    w = Window(np.arange(8.0), horizon=1)
    eb = effective_budget(Budget(epsilon=0.5, ratio=0.25), w)  # mask = last 2
    from tsrobust import BasisSpec

    cfg = AttackConfig(method="simba", iterations=20, step_size=0.4, basis=BasisSpec(kind="dct"), seed=0)
    res = simba_attack(AttackObjective(model, w, [0.0]), eb, cfg)
    assert np.all(res.delta[:6] == 0.0)
    assert np.all(np.abs(res.delta) <= eb.step_bound + 1e-15)


# ---------------------------------------------------------------------------
# Dispatch and result invariants
# ---------------------------------------------------------------------------


def test_run_attack_dispatch_and_unknown_method():
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=0.5)
    obj = AttackObjective(model, w, reference=[0.0])
    res = run_attack(obj, eb, AttackConfig(method="fgsm"))
    assert res.queries_used >= 1
    with pytest.raises(InvalidInput):
        AttackConfig(method="nonsense")


def test_attack_result_arrays_are_read_only():
    model = naive_last()
    w = Window([1.0, 2.0], horizon=1)
    eb = budget_for(w, epsilon=0.5)
    res = pgd(AttackObjective(model, w, [0.0]), eb, AttackConfig(iterations=3))
    with pytest.raises(ValueError):
        res.delta[0] = 1.0
    with pytest.raises(ValueError):
        res.objective_trace[0] = 1.0
