"""Anatomy of one adversarial forecast attack, end to end.

A seasonal series, a small trained forecaster, and a single context
window: this script walks through what an attacker with a sparsity and
amplitude budget can do to the forecast.  It compares a one-shot
gradient step, an iterative ascent, and two query-only searches on the
same window in targeted mode (pull the forecast toward its mirror
image), demonstrates why untargeted ascent needs a random start, and
shows where in the context the damage concentrates.

Run with ``python3 demos/01_attack_anatomy.py`` (about ten seconds).
"""

import numpy as np

from tsrobust import (
    AttackConfig,
    Budget,
    Direction,
    LinearAR,
    MLPForecaster,
    TrainConfig,
    Window,
    evaluate_window,
    fit,
    flipping,
    localize_vulnerability,
    seasonal_series,
    windows_from_series,
)

L, T, PERIOD = 36, 12, 12


def spark(values, width=60):
    """Coarse unicode sparkline, enough to see shapes side by side."""
    ticks = "▁▂▃▄▅▆▇█"
    vals = np.asarray(values, dtype=float)[-width:]
    lo, hi = vals.min(), vals.max()
    span = (hi - lo) or 1.0
    return "".join(ticks[int((v - lo) / span * (len(ticks) - 1))] for v in vals)


def main():
    series = seasonal_series(
        length=3000, period=PERIOD, amplitude=1.0, trend=0.0, level=0.0,
        noise=0.1, seed=101, series_id="demo",
    )
    print(f"series {series.id!r}: {series.values.size} points, period {PERIOD}")
    print(f"  tail: {spark(series.values)}")

    vals = series.values
    train = [Window(vals[s : s + L], T, truth=vals[s + L : s + L + T]) for s in range(0, 300, 3)]
    model0 = MLPForecaster.initialize(L, 64, T, seed=0)
    model, history = fit(model0, train, TrainConfig(epochs=300, lr=1e-2, batch=32, seed=0))
    print(f"\nfit {model.model_id}: train loss {history[0]:.4f} -> {history[-1]:.4f}")

    window = windows_from_series(series, L, T, count=1)[0]
    budget = Budget(epsilon=0.5, ratio=0.5)
    print(f"\nbudget: amplitude {budget.epsilon} x var(context), last {budget.ratio:.0%} of positions")
    print("goal: drag the forecast toward its mirror image (targeted flip)\n")

    print(f"{'method':<8} {'queries':>8} {'clean err':>10} {'adv err':>10} {'RED':>8}")
    for method, iters in (("fgsm", 1), ("pgd", 100), ("simba", 150), ("zoo", 30)):
        rec = evaluate_window(
            model, window,
            AttackConfig(method=method, iterations=iters, step_size=0.05, seed=0),
            budget,
            direction=Direction.TARGETED,
            target_spec=flipping(-1.0),
        )
        print(f"{method:<8} {rec.queries:>8} {rec.e_clean:>10.4f} {rec.e_adv:>10.4f} {rec.red:>8.3f}")
    print("(errors are distances to the flip target, so positive RED = progress)")

    print("\nuntargeted ascent measures distance from the clean forecast, which")
    print("makes delta = 0 a stationary point; a random start breaks the tie:")
    for label, random_start in (("cold start", False), ("random start", True)):
        rec = evaluate_window(
            model, window,
            AttackConfig(method="pgd", iterations=100, step_size=0.05,
                         random_start=random_start, seed=1),
            budget,
        )
        print(f"  pgd, {label:<13}: adv error {rec.e_adv:.4f} (clean {rec.e_clean:.4f}, RED {rec.red:+.3f})")

    probes = windows_from_series(series, L, T, count=20)
    print("\nwhere the flagged positions live (share of 20 windows, 0 = oldest):")
    for probe_model, note in ((LinearAR(weights=np.array([1.0])), "repeat-last baseline"),
                              (model, "trained network")):
        counts = localize_vulnerability(probe_model, probes, k=5)
        hot = sorted(p for p in np.argsort(counts)[::-1][:3].tolist() if counts[p] > 0)
        desc = ", ".join(f"{p} ({counts[p]}/20)" for p in hot)
        print(f"  {probe_model.model_id:<12} ({note}): {desc}")
    print("\nthe baseline funnels everything through the final observation, while")
    print("the network spreads mass across season-aligned lags; the sparsity knob")
    print("in the budget exists precisely to probe that concentration.")


if __name__ == "__main__":
    main()
