"""Attacking a forecaster that lives in another process.

Query-based attacks only need forecasts, so the model under test can sit
behind a pipe speaking one JSON object per line.  This script serves an
in-repo model in a child process, attacks it through the bridge client,
and checks the run against the same attack executed in-process: same
perturbation, same trace, same query count, bit for bit.

Run with ``python3 demos/04_remote_attack.py`` (a few seconds).
"""

import sys

import numpy as np

from tsrobust import (
    AttackConfig,
    AttackObjective,
    BridgeEndpoint,
    Budget,
    NoGradientCapability,
    SeasonalNaive,
    Window,
    connect,
    effective_budget,
    run_attack,
    seasonal_series,
)


def main():
    series = seasonal_series(length=400, period=12, amplitude=2.0, trend=0.01,
                             level=10.0, noise=0.3, seed=5, series_id="remote-demo")
    w = Window(series.values[-48:-12], horizon=12, truth=series.values[-12:])
    local = SeasonalNaive(period=12)

    endpoint = BridgeEndpoint.stdio([
        sys.executable, "-m", "tsrobust", "serve-demo",
        "--model-json", '{"type": "seasonal_naive", "period": 12}',
    ])
    print(f"spawning: {' '.join(endpoint.command[-3:])}")

    with connect(endpoint) as remote:
        info = remote.info
        print(f"handshake: model_id={info.model_id!r}, gradient={info.capabilities.gradient}")

        same = np.array_equal(local.predict(w).point, remote.predict(w).point)
        print(f"forecast parity on one window: {same}")

        eb = effective_budget(Budget(epsilon=0.5, ratio=0.5), w)
        cfg = AttackConfig(method="simba", iterations=60, seed=3)
        res_local = run_attack(AttackObjective(local, w, w.truth), eb, cfg)
        res_remote = run_attack(AttackObjective(remote, w, w.truth), eb, cfg)

        print(f"\nsimba in-process : objective {res_local.objective_trace[-1]:.6f} "
              f"after {res_local.queries_used} queries")
        print(f"simba over bridge: objective {res_remote.objective_trace[-1]:.6f} "
              f"after {res_remote.queries_used} queries")
        print(f"identical deltas : {np.array_equal(res_local.delta, res_remote.delta)}")
        print(f"identical traces : {np.array_equal(res_local.objective_trace, res_remote.objective_trace)}")

        print("\nwhite-box methods are gated by the declared capabilities:")
        try:
            run_attack(AttackObjective(remote, w, w.truth), eb,
                       AttackConfig(method="pgd", iterations=5))
        except NoGradientCapability as exc:
            print(f"  pgd refused before any traffic: {exc}")

    print("\nany process that answers the same line protocol can stand in for the")
    print("child here; the attack code cannot tell the difference.")


if __name__ == "__main__":
    main()
