"""Command line front end.

Commands: ``attack`` (one window, one budget), ``grid`` (full sweep),
``defend`` (smoothing wrap or adversarial fine-tuning), ``localize``
(gradient-mass histogram), ``transfer`` (cross-model perturbation replay),
``serve-demo`` (host an in-repo model behind the bridge), and ``report``
(recompute summaries from a records CSV).

Shared flags: ``--config`` points at a JSON experiment config, ``--seed``
and ``--out-dir`` override the corresponding config fields, and
``--model-json`` swaps in an inline model spec.  Exit codes: 0 success,
2 bad configuration or unreadable/unwritable files, 3 model or protocol
failure, 4 a grid that finished with some failed cells.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from ._version import __version__
from .defenses import (
    AdvTrainConfig,
    SmoothingWrapper,
    dataset_fingerprint,
    finetune,
    iat_finetune,
    lat_finetune,
)
from .errors import ConfigError, InvalidInput, IoError, ToolkitError
from .forecasters import save_checkpoint
from .harness import (
    ExperimentConfig,
    build_model,
    close_model,
    curves_from_records,
    emit_report,
    evaluate_window_outcome,
    load_dataset,
    localize_vulnerability,
    parse_records_csv,
    run_grid,
    summarize_records,
    trajectory_entries,
    transfer_eval,
    windows_from_series,
)
from .series import Budget, TimeSeries
from .synth import seasonal_series

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_PARTIAL = 4


def _shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out-dir", metavar="DIR", help="override the config output directory")
    parser.add_argument(
        "--model-json",
        metavar="JSON",
        help="inline model spec replacing the config model list",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsrobust",
        description="Adversarial robustness toolkit for time-series forecasters.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack one window under one budget")
    _shared_flags(p)
    p.add_argument("--method", help="override the attack method")
    p.add_argument("--epsilon", type=float, help="override the budget epsilon")
    p.add_argument("--ratio", type=float, help="override the budget ratio")

    p = sub.add_parser("grid", help="run the full budget grid")
    _shared_flags(p)

    p = sub.add_parser("defend", help="smooth-wrap or fine-tune a model")
    _shared_flags(p)
    p.add_argument(
        "--defense",
        choices=("smooth", "lat", "iat", "finetune"),
        default="lat",
        help="which defense to apply",
    )
    p.add_argument("--kernel", type=int, default=3, help="smoothing kernel width")
    p.add_argument("--epsilon", type=float, default=0.5, help="inner perturbation bound")
    p.add_argument("--inner-steps", type=int, default=5)
    p.add_argument("--inner-lr", type=float, default=0.1)
    p.add_argument("--outer-lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--train-windows", type=int, default=8, help="training windows per series")

    p = sub.add_parser("localize", help="rank input positions by gradient mass")
    _shared_flags(p)
    p.add_argument("--top-k", type=int, default=25)

    p = sub.add_parser("transfer", help="replay source perturbations on other models")
    _shared_flags(p)

    p = sub.add_parser("serve-demo", help="host an in-repo model behind the bridge")
    _shared_flags(p)
    p.add_argument("--tcp", metavar="HOST:PORT", help="serve over TCP instead of stdio")

    p = sub.add_parser("report", help="recompute summary and curves from records.csv")
    _shared_flags(p)
    p.add_argument("records", help="path to a records.csv file")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "out_dir", None) is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out_dir)
    if getattr(args, "model_json", None):
        try:
            spec = json.loads(args.model_json)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--model-json is not valid JSON: {exc}") from None
        cfg = dataclasses.replace(cfg, models=(spec,))
    return cfg


def _series_for(cfg: ExperimentConfig) -> list[TimeSeries]:
    """Dataset series, or a deterministic synthetic stand-in when no path is set."""
    if cfg.dataset:
        return load_dataset(cfg.dataset)
    span = cfg.context_len + cfg.horizon
    length = (cfg.windows_per_series + 1) * span
    period = 24 if cfg.context_len >= 48 else max(4, cfg.context_len // 4)
    return [
        seasonal_series(
            length,
            period,
            amplitude=10.0,
            trend=0.01,
            level=20.0,
            noise=0.5,
            seed=cfg.seed + i,
            series_id=f"synthetic-{i}",
            frequency_tag=cfg.frequency,
        )
        for i in range(3)
    ]


def _windows_for(cfg: ExperimentConfig, series, per_series: int | None = None):
    out = []
    count = per_series if per_series is not None else cfg.windows_per_series
    for s in series:
        for w in windows_from_series(s, cfg.context_len, cfg.horizon, count):
            out.append((s.id, w))
    if not out:
        raise ConfigError(
            f"no window of {cfg.context_len}+{cfg.horizon} points fits any of the {len(series)} series"
        )
    return out


def _cmd_attack(args) -> int:
    cfg = _load_config(args)
    series = _series_for(cfg)
    sid, window = _windows_for(cfg, series, per_series=1)[0]
    attack_cfg = cfg.attacks[0]
    if args.method:
        attack_cfg = dataclasses.replace(attack_cfg, method=args.method)
    attack_cfg = dataclasses.replace(attack_cfg, seed=cfg.seed)
    epsilon = args.epsilon if args.epsilon is not None else cfg.epsilons[0]
    ratio = args.ratio if args.ratio is not None else cfg.ratios[0]
    budget = Budget(epsilon=epsilon, ratio=ratio)
    model = build_model(cfg.models[0])
    try:
        outcome = evaluate_window_outcome(
            model,
            window,
            attack_cfg,
            budget,
            cfg.direction,
            cfg.target,
            cfg.metric,
            cfg.loss_kind,
            dataset_id=sid,
        )
    finally:
        close_model(model)
    rec = outcome.record
    paths = emit_report(
        [rec],
        cfg.out_dir,
        summary=summarize_records([rec], config=cfg.to_dict(), seed=cfg.seed),
        trajectories=trajectory_entries([outcome]),
    )
    print(
        f"{rec.model_id} {rec.method} eps={rec.epsilon:g} r={rec.ratio:g}: "
        f"e_clean={rec.e_clean:.6g} e_adv={rec.e_adv:.6g} red={rec.red:.6g} "
        f"queries={rec.queries}"
    )
    print(f"wrote {paths['records']}")
    return EXIT_OK


def _cmd_grid(args) -> int:
    cfg = _load_config(args)
    series = _series_for(cfg)
    result = run_grid(cfg, series=series)
    paths = emit_report(result.records, cfg.out_dir, summary=result.summary, curves=result.curves)
    micro = result.summary["mean_micro"]
    macro = result.summary["mean_macro"]
    print(
        f"{len(result.records)} records ({result.summary['live']} live, "
        f"{result.summary['skipped']} skipped, {result.summary['failed']} failed); "
        f"mean RED micro={micro if micro is None else format(micro, '.6g')} "
        f"macro={macro if macro is None else format(macro, '.6g')}"
    )
    print(f"wrote {paths['records']}")
    return EXIT_PARTIAL if result.partial else EXIT_OK


def _cmd_defend(args) -> int:
    cfg = _load_config(args)
    series = _series_for(cfg)
    model = build_model(cfg.models[0])
    try:
        if args.defense == "smooth":
            defended = SmoothingWrapper(model, kernel=args.kernel)
            sid, window = _windows_for(cfg, series, per_series=1)[0]
            budget = Budget(epsilon=cfg.epsilons[0], ratio=cfg.ratios[0])
            attack_cfg = dataclasses.replace(cfg.attacks[0], seed=cfg.seed)
            records = []
            for m in (model, defended):
                records.append(
                    evaluate_window_outcome(
                        m, window, attack_cfg, budget, cfg.direction, cfg.target,
                        cfg.metric, cfg.loss_kind, dataset_id=sid,
                    ).record
                )
            paths = emit_report(records, cfg.out_dir, summary=summarize_records(records))
            base, wrapped = records
            print(
                f"adversarial {cfg.metric.value}: {base.e_adv:.6g} undefended -> "
                f"{wrapped.e_adv:.6g} with kernel {args.kernel}"
            )
            print(f"wrote {paths['records']}")
            return EXIT_OK

        windows = [w for _, w in _windows_for(cfg, series, per_series=args.train_windows)]
        train_cfg = AdvTrainConfig(
            mode={"finetune": "plain"}.get(args.defense, args.defense),
            epsilon=args.epsilon,
            inner_steps=args.inner_steps,
            inner_lr=args.inner_lr,
            outer_lr=args.outer_lr,
            epochs=args.epochs,
            batch=args.batch,
            seed=cfg.seed,
            loss_kind=cfg.loss_kind,
        )
        runner = {"lat": lat_finetune, "iat": iat_finetune, "plain": finetune}[train_cfg.mode]
        hardened, history = runner(model, windows, train_cfg)
        os.makedirs(cfg.out_dir, exist_ok=True)
        out_path = os.path.join(cfg.out_dir, f"defended-{train_cfg.mode}.json")
        save_checkpoint(
            hardened,
            out_path,
            provenance={
                "defense": train_cfg.to_dict(),
                "dataset_sha256": dataset_fingerprint(windows),
                "windows": len(windows),
            },
        )
        first = history[0] if history else float("nan")
        last = history[-1] if history else float("nan")
        print(f"{train_cfg.mode} fine-tuning: loss {first:.6g} -> {last:.6g} over {len(history)} epochs")
        print(f"wrote {out_path}")
        return EXIT_OK
    finally:
        close_model(model)


def _cmd_localize(args) -> int:
    cfg = _load_config(args)
    series = _series_for(cfg)
    windows = [w for _, w in _windows_for(cfg, series)]
    model = build_model(cfg.models[0])
    try:
        counts = localize_vulnerability(model, windows, k=args.top_k, loss_kind=cfg.loss_kind)
    finally:
        close_model(model)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_path = os.path.join(cfg.out_dir, "localization.csv")
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("position,count\n")
            for pos, count in enumerate(counts):
                fh.write(f"{pos},{int(count)}\n")
    except OSError as exc:
        raise IoError(f"cannot write {out_path}: {exc}") from None
    top = np.argsort(-counts, kind="stable")[:5]
    ranked = ", ".join(f"{int(p)} ({int(counts[p])})" for p in top if counts[p] > 0)
    print(f"marked positions over {len(windows)} windows, top: {ranked if ranked else '-'}")
    print(f"wrote {out_path}")
    return EXIT_OK


def _cmd_transfer(args) -> int:
    cfg = _load_config(args)
    if len(cfg.models) < 2:
        raise ConfigError("transfer needs at least two models (source first)")
    series = _series_for(cfg)
    windows = [w for _, w in _windows_for(cfg, series)]
    models = []
    try:
        for spec in cfg.models:
            models.append(build_model(spec))
        source, targets = models[0], models
        attack_cfg = dataclasses.replace(cfg.attacks[0], seed=cfg.seed)
        budget = Budget(epsilon=cfg.epsilons[0], ratio=cfg.ratios[0])
        by_target = transfer_eval(
            source, targets, attack_cfg, budget, windows,
            cfg.direction, cfg.target, cfg.metric, cfg.loss_kind,
        )
    finally:
        for m in models:
            close_model(m)
    records = [rec for recs in by_target.values() for rec in recs]
    paths = emit_report(records, cfg.out_dir, summary=summarize_records(records, config=cfg.to_dict(), seed=cfg.seed))
    for target_id, recs in by_target.items():
        live = [r.red for r in recs if r.live]
        mean_red = float(np.mean(live)) if live else float("nan")
        marker = " (source)" if target_id == source.model_id else ""
        print(f"{target_id}{marker}: mean RED {mean_red:.6g} over {len(recs)} windows")
    print(f"wrote {paths['records']}")
    return EXIT_OK


def _cmd_serve_demo(args) -> int:
    from .bridge import serve, serve_tcp

    cfg = _load_config(args)
    model = build_model(cfg.models[0])
    try:
        if args.tcp:
            host, _, port = args.tcp.rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError("--tcp expects HOST:PORT")
            server = serve_tcp(model, host, int(port))
            print(f"serving {model.model_id} on {server.server_address[0]}:{server.server_address[1]}", file=sys.stderr)
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                pass
            finally:
                server.server_close()
        else:
            serve(model, sys.stdin.buffer, sys.stdout.buffer)
    finally:
        close_model(model)
    return EXIT_OK


def _cmd_report(args) -> int:
    cfg = _load_config(args)
    records = parse_records_csv(args.records)
    if not records:
        raise InvalidInput(f"{args.records} holds no records")
    summary = summarize_records(
        records, config=cfg.to_dict() if args.config else None, seed=cfg.seed if args.config else None
    )
    curves = curves_from_records(records)
    paths = emit_report(records, cfg.out_dir, summary=summary, curves=curves)
    micro = summary["mean_micro"]
    print(
        f"{len(records)} records; mean RED micro="
        f"{micro if micro is None else format(micro, '.6g')}"
    )
    print(f"wrote {paths['summary']}")
    return EXIT_OK


_COMMANDS = {
    "attack": _cmd_attack,
    "grid": _cmd_grid,
    "defend": _cmd_defend,
    "localize": _cmd_localize,
    "transfer": _cmd_transfer,
    "serve-demo": _cmd_serve_demo,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, InvalidInput, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
