"""Hardening a small forecaster against budgeted perturbations.

A network fit on a handful of windows is easy to drag around inside the
perturbation budget.  This script measures that fragility under a
targeted flip attack, then applies the two adversarial fine-tuning
modes (noise injected at the latent seam vs. crafted in input space)
and the training-free smoothing wrapper, and reports how much of the
attack's leverage each one removes.

Run with ``python3 demos/03_hardening.py`` (about a minute; the
fine-tuning corpus is large on purpose so the pinned recipe has enough
optimizer steps to matter).
"""

import numpy as np

from tsrobust import (
    AdvTrainConfig,
    AttackConfig,
    Budget,
    Direction,
    MLPForecaster,
    SmoothingWrapper,
    TrainConfig,
    Window,
    evaluate_window,
    fit,
    flipping,
    iat_finetune,
    lat_finetune,
    seasonal_series,
    windows_from_series,
)

L, T, PERIOD = 36, 12, 12
BUDGET = Budget(epsilon=0.5, ratio=1.0)


def make_windows(values, start, stop, stride=1):
    span = L + T
    return [Window(values[s : s + L], T, truth=values[s + L : s + span])
            for s in range(start, stop, stride)]


def targeted_red(model, windows):
    reds = []
    for i, w in enumerate(windows):
        rec = evaluate_window(
            model, w,
            AttackConfig(method="pgd", step_size=0.05, iterations=300, seed=i),
            BUDGET, direction=Direction.TARGETED, target_spec=flipping(-1.0),
        )
        reds.append(rec.red)
    return float(np.mean(reds))


def untargeted_damage(model, windows):
    errors = []
    for i, w in enumerate(windows):
        rec = evaluate_window(
            model, w,
            AttackConfig(method="pgd", step_size=0.05, iterations=300,
                         random_start=True, seed=100 + i),
            BUDGET,
        )
        errors.append((rec.e_clean, rec.e_adv))
    pairs = np.array(errors)
    return float(pairs[:, 0].mean()), float(pairs[:, 1].mean())


def main():
    series = seasonal_series(length=3000, period=PERIOD, amplitude=1.0, trend=0.0,
                             level=0.0, noise=0.1, seed=101, series_id="main")
    base, _ = fit(
        MLPForecaster.initialize(L, 64, T, seed=0),
        make_windows(series.values, 0, 300, stride=3),
        TrainConfig(epochs=1000, lr=1e-2, batch=32, seed=0),
    )
    eval_windows = windows_from_series(series, L, T, count=8)
    red0 = targeted_red(base, eval_windows)
    print(f"base model: targeted flip RED {red0:.3f} at eps={BUDGET.epsilon}, ratio={BUDGET.ratio}")
    print("(the network was overfit on 100 windows, and it shows)\n")

    corpus_series = seasonal_series(length=80_000, period=PERIOD, amplitude=1.0,
                                    trend=0.0, level=0.0, noise=0.1, seed=202,
                                    series_id="corpus")
    corpus = make_windows(corpus_series.values, 0, corpus_series.values.size - (L + T))
    print(f"fine-tuning corpus: {len(corpus)} windows")

    rows = [("undefended", red0)]
    lat, _ = lat_finetune(base, corpus, AdvTrainConfig(
        mode="lat", epsilon=0.5, inner_steps=5, inner_lr=0.5,
        outer_lr=1e-4, epochs=5, batch=64, seed=0))
    rows.append(("latent-noise tuned", targeted_red(lat, eval_windows)))
    iat, _ = iat_finetune(base, corpus, AdvTrainConfig(
        mode="iat", epsilon=0.5, inner_steps=5, inner_lr=0.1,
        outer_lr=1e-4, epochs=5, batch=64, seed=0))
    rows.append(("input-ascent tuned", targeted_red(iat, eval_windows)))

    print(f"\n{'model':<22} {'flip RED':>9} {'vs base':>9}")
    for name, red in rows:
        print(f"{name:<22} {red:>9.3f} {red / red0:>8.0%}")

    print("\nsmoothing is training-free: it averages the context before the")
    print("model sees it, sanding off the high-frequency spikes attacks love.")
    clean_raw, adv_raw = untargeted_damage(base, eval_windows)
    wrapped = SmoothingWrapper(base, kernel=3)
    clean_s, adv_s = untargeted_damage(wrapped, eval_windows)
    print(f"\n{'model':<22} {'clean NMAE':>11} {'adv NMAE':>10}")
    print(f"{base.model_id:<22} {clean_raw:>11.4f} {adv_raw:>10.4f}")
    print(f"{wrapped.model_id:<22} {clean_s:>11.4f} {adv_s:>10.4f}")
    print("\nthe wrapper trades clean accuracy for attack resistance; the tuned")
    print("models keep the clean forecast and shrink the adversarial gap instead.")


if __name__ == "__main__":
    main()
