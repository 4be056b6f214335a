"""End-to-end robustness evaluation: windowing, grids, reports, diagnostics.

The evaluation of one window follows a fixed order: predict the clean
forecast, build the attack reference (the clean forecast itself for
untargeted runs, its transform for targeted runs), resolve the budget
against the window, run the attack, forecast at the returned perturbation,
and score the relative error deviation.  Grids sweep that evaluation over
models x windows x budgets x attacks with per-cell derived seeds, record
failures without stopping, and aggregate means per cell.

Reports are plain files: a CSV with one row per record in a stable column
order, a JSON summary whose embedded configuration parses back into an
equal config, a CSV of error-versus-budget curves, and optionally the
clean/adversarial/target trajectories for external plotting.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from ._version import __version__
from .attacks import AttackConfig, AttackObjective, AttackResult, run_attack
from .bridge import BridgeEndpoint, RemoteModel, connect
from .defenses import SmoothingWrapper
from .errors import (
    ConfigError,
    InvalidInput,
    IoError,
    NoGradientCapability,
    ToolkitError,
)
from .forecasters import (
    ForecastModel,
    LinearAR,
    MLPForecaster,
    SeasonalNaive,
    load_checkpoint,
)
from .metrics import MetricKind, forecast_error, relative_error_deviation
from .series import (
    Budget,
    Direction,
    LossKind,
    TimeSeries,
    Window,
    effective_budget,
    load_series_csv,
    variance,
)
from .targets import TargetSpec, build_target

__all__ = [
    "DEFAULT_EPSILONS",
    "DEFAULT_RATIOS",
    "ExperimentConfig",
    "EvalRecord",
    "RECORD_COLUMNS",
    "WindowOutcome",
    "GridResult",
    "build_model",
    "close_model",
    "windows_from_series",
    "load_dataset",
    "evaluate_window",
    "evaluate_window_outcome",
    "run_grid",
    "localize_vulnerability",
    "decomposition_consistency",
    "transfer_eval",
    "summarize_records",
    "curves_from_records",
    "emit_report",
    "parse_records_csv",
]

DEFAULT_EPSILONS = (0.25, 0.5, 0.75, 1.0)
DEFAULT_RATIOS = (0.25, 0.5, 0.75, 1.0)

REF_TRUTH = "truth"
REF_CLEAN = "clean_forecast"
REF_TARGET = "target"


def _direction_from_label(label: str) -> Direction:
    for d in Direction:
        if d.label == label:
            return d
    raise InvalidInput(f"unknown direction {label!r}")


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a grid run needs, round-trippable through JSON."""

    dataset: str = ""
    frequency: str | None = None
    context_len: int = 128
    horizon: int = 24
    windows_per_series: int = 1
    models: tuple = (("linear_ar", ()),)
    attacks: tuple = (AttackConfig(),)
    epsilons: tuple = DEFAULT_EPSILONS
    ratios: tuple = DEFAULT_RATIOS
    direction: Direction = Direction.UNTARGETED
    target: TargetSpec | None = None
    metric: MetricKind = MetricKind.NMAE
    loss_kind: LossKind = LossKind.MSE
    seed: int = 0
    out_dir: str = "results"

    def __post_init__(self):
        if int(self.context_len) < 2:
            raise ConfigError("context_len must be >= 2")
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be >= 1")
        if int(self.windows_per_series) < 1:
            raise ConfigError("windows_per_series must be >= 1")
        object.__setattr__(self, "context_len", int(self.context_len))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "windows_per_series", int(self.windows_per_series))
        object.__setattr__(self, "seed", int(self.seed))
        models = tuple(_frozen_model_spec(m) for m in self.models)
        if not models:
            raise ConfigError("at least one model is required")
        object.__setattr__(self, "models", models)
        attacks = tuple(self.attacks)
        if not attacks or not all(isinstance(a, AttackConfig) for a in attacks):
            raise ConfigError("attacks must be a non-empty list of attack configs")
        object.__setattr__(self, "attacks", attacks)
        for name in ("epsilons", "ratios"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ConfigError(f"{name} must be non-empty")
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, vals)
        if any(v < 0 for v in self.epsilons):
            raise ConfigError("epsilons must be >= 0")
        if any(not (0 < v <= 1) for v in self.ratios):
            raise ConfigError("ratios must lie in (0, 1]")
        if self.direction is Direction.TARGETED and self.target is None:
            raise ConfigError("targeted runs need a target spec")

    def model_dicts(self) -> list[dict]:
        return [_thaw_model_spec(m) for m in self.models]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "frequency": self.frequency,
            "context_len": self.context_len,
            "horizon": self.horizon,
            "windows_per_series": self.windows_per_series,
            "models": self.model_dicts(),
            "attacks": [a.to_dict() for a in self.attacks],
            "epsilons": list(self.epsilons),
            "ratios": list(self.ratios),
            "direction": self.direction.label,
            "target": None if self.target is None else self.target.to_dict(),
            "metric": self.metric.value,
            "loss": self.loss_kind.value,
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {
            "dataset",
            "frequency",
            "context_len",
            "horizon",
            "windows_per_series",
            "models",
            "attacks",
            "epsilons",
            "ratios",
            "direction",
            "target",
            "metric",
            "loss",
            "seed",
            "out_dir",
        }
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        kwargs: dict = {}
        try:
            for key in ("dataset", "frequency", "context_len", "horizon", "windows_per_series", "seed", "out_dir"):
                if key in data:
                    kwargs[key] = data[key]
            if "models" in data:
                kwargs["models"] = tuple(data["models"])
            if "attacks" in data:
                kwargs["attacks"] = tuple(AttackConfig.from_dict(a) for a in data["attacks"])
            if "epsilons" in data:
                kwargs["epsilons"] = tuple(data["epsilons"])
            if "ratios" in data:
                kwargs["ratios"] = tuple(data["ratios"])
            if "direction" in data:
                kwargs["direction"] = _direction_from_label(data["direction"])
            if data.get("target") is not None:
                kwargs["target"] = TargetSpec.from_dict(data["target"])
            if "metric" in data:
                kwargs["metric"] = MetricKind(data["metric"])
            if "loss" in data:
                kwargs["loss_kind"] = LossKind(data["loss"])
        except ConfigError:
            raise
        except (ToolkitError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad config: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)


def _frozen_model_spec(spec) -> tuple:
    """Model specs live in a frozen config, so store them hashably."""
    if isinstance(spec, tuple) and len(spec) == 2 and isinstance(spec[0], str):
        return spec
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"model spec must be an object with a type, got {spec!r}")
    rest = {k: v for k, v in spec.items() if k != "type"}
    return (spec["type"], _freeze_value(rest))


def _freeze_value(value):
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze_value(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple)):
        return tuple(_freeze_value(v) for v in value)
    return value


def _thaw_value(value):
    if (
        isinstance(value, tuple)
        and len(value) > 0
        and all(
            isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], str)
            for item in value
        )
    ):
        return {k: _thaw_value(v) for k, v in value}
    if isinstance(value, tuple):
        return [_thaw_value(v) for v in value]
    return value


def _thaw_model_spec(frozen: tuple) -> dict:
    kind, rest = frozen
    out = {"type": kind}
    thawed = _thaw_value(rest)
    if thawed:
        out.update(thawed)
    return out


# ---------------------------------------------------------------------------
# Model construction from specs
# ---------------------------------------------------------------------------


def build_model(spec) -> ForecastModel:
    """Instantiate a forecaster (possibly remote) from a config spec."""
    if isinstance(spec, tuple):
        spec = _thaw_model_spec(spec)
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"model spec must be an object with a type, got {spec!r}")
    kind = spec["type"]
    args = {k: v for k, v in spec.items() if k != "type"}
    try:
        if kind == "seasonal_naive":
            return SeasonalNaive(period=args.pop("period", 1), **args)
        if kind == "linear_ar":
            weights = np.asarray(args.pop("weights", [1.0]), dtype=np.float64)
            return LinearAR(weights=weights, **args)
        if kind == "mlp":
            if "checkpoint" in args:
                return load_checkpoint(args.pop("checkpoint"))
            return MLPForecaster.initialize(
                input_len=args.pop("input_len"),
                hidden_dim=args.pop("hidden_dim", 16),
                horizon=args.pop("horizon"),
                quantile_levels=tuple(args.pop("quantile_levels", ())),
                seed=args.pop("seed", 0),
                **args,
            )
        if kind == "checkpoint":
            return load_checkpoint(args.pop("path"))
        if kind == "bridge":
            return connect(BridgeEndpoint.from_dict(args.pop("endpoint")))
        if kind == "smoothed":
            inner = build_model(args.pop("inner"))
            return SmoothingWrapper(inner, kernel=args.pop("kernel", 3))
    except ConfigError:
        raise
    except (ToolkitError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad model spec for type {kind!r}: {exc}") from None
    raise ConfigError(f"unknown model type {kind!r}")


def close_model(model: ForecastModel) -> None:
    """Release any bridge connection a built model may hold."""
    if isinstance(model, RemoteModel):
        model.close()
    elif isinstance(model, SmoothingWrapper):
        close_model(model.inner)


# ---------------------------------------------------------------------------
# Dataset windowing
# ---------------------------------------------------------------------------


def load_dataset(path: str) -> list[TimeSeries]:
    try:
        return load_series_csv(path)
    except OSError as exc:
        raise IoError(f"cannot read dataset {path}: {exc}") from None


def windows_from_series(
    series: TimeSeries, context_len: int, horizon: int, count: int = 1
) -> list[Window]:
    """Non-overlapping evaluation windows from the tail, most recent first."""
    if context_len < 1 or horizon < 1 or count < 1:
        raise InvalidInput("context_len, horizon, and count must be >= 1")
    span = context_len + horizon
    values = series.values
    out: list[Window] = []
    end = values.size
    while len(out) < count and end - span >= 0:
        start = end - span
        out.append(
            Window(
                values[start : start + context_len],
                horizon,
                truth=values[start + context_len : end],
                origin_index=start,
            )
        )
        end -= span
    return out


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


RECORD_COLUMNS = (
    "model_id",
    "dataset_id",
    "window_origin",
    "epsilon",
    "ratio",
    "method",
    "direction",
    "metric",
    "reference",
    "e_clean",
    "e_adv",
    "red",
    "queries",
    "skipped_degenerate",
    "flags",
)


@dataclass(frozen=True)
class EvalRecord:
    """One window x budget x attack evaluation row.

    For live rows ``red`` is recomputable bit-exactly from ``e_clean``,
    ``e_adv``, and ``direction``; skipped or failed rows carry NaN metrics
    and say why in ``flags``.
    """

    model_id: str
    dataset_id: str
    window_origin: int
    epsilon: float
    ratio: float
    method: str
    direction: str
    metric: str
    reference: str
    e_clean: float
    e_adv: float
    red: float
    queries: int
    skipped_degenerate: bool
    flags: tuple = ()

    @property
    def failed(self) -> bool:
        return any(f.startswith("error:") for f in self.flags)

    @property
    def live(self) -> bool:
        return not (self.skipped_degenerate or self.failed)

    def to_row(self) -> list[str]:
        return [
            self.model_id,
            self.dataset_id,
            str(self.window_origin),
            repr(float(self.epsilon)),
            repr(float(self.ratio)),
            self.method,
            self.direction,
            self.metric,
            self.reference,
            repr(float(self.e_clean)),
            repr(float(self.e_adv)),
            repr(float(self.red)),
            str(self.queries),
            "true" if self.skipped_degenerate else "false",
            "|".join(self.flags),
        ]

    @classmethod
    def from_row(cls, row: list[str]) -> "EvalRecord":
        if len(row) != len(RECORD_COLUMNS):
            raise InvalidInput(f"record row has {len(row)} fields, expected {len(RECORD_COLUMNS)}")
        return cls(
            model_id=row[0],
            dataset_id=row[1],
            window_origin=int(row[2]),
            epsilon=float(row[3]),
            ratio=float(row[4]),
            method=row[5],
            direction=row[6],
            metric=row[7],
            reference=row[8],
            e_clean=float(row[9]),
            e_adv=float(row[10]),
            red=float(row[11]),
            queries=int(row[12]),
            skipped_degenerate=row[13] == "true",
            flags=tuple(f for f in row[14].split("|") if f),
        )


@dataclass(frozen=True)
class WindowOutcome:
    """A record plus the artifacts behind it, for plotting and transfer."""

    record: EvalRecord
    clean_forecast: np.ndarray | None = None
    adv_forecast: np.ndarray | None = None
    target: np.ndarray | None = None
    result: AttackResult | None = None


# ---------------------------------------------------------------------------
# Single-window evaluation
# ---------------------------------------------------------------------------


def evaluate_window_outcome(
    model: ForecastModel,
    window: Window,
    attack_cfg: AttackConfig,
    budget: Budget,
    direction: Direction = Direction.UNTARGETED,
    target_spec: TargetSpec | None = None,
    metric: MetricKind = MetricKind.NMAE,
    loss_kind: LossKind = LossKind.MSE,
    dataset_id: str = "",
) -> WindowOutcome:
    if direction is Direction.TARGETED and target_spec is None:
        raise InvalidInput("targeted evaluation needs a target spec")

    def record(reference, e_clean, e_adv, red, queries, skipped, flags):
        return EvalRecord(
            model_id=model.model_id,
            dataset_id=dataset_id,
            window_origin=window.origin_index,
            epsilon=budget.epsilon,
            ratio=budget.ratio,
            method=attack_cfg.method,
            direction=direction.label,
            metric=metric.value,
            reference=reference,
            e_clean=e_clean,
            e_adv=e_adv,
            red=red,
            queries=queries,
            skipped_degenerate=skipped,
            flags=tuple(flags),
        )

    if variance(window.context) == 0.0:
        nan = float("nan")
        return WindowOutcome(record("", nan, nan, nan, 0, True, ("zero-variance",)))

    clean_fd = model.predict(window)
    if direction is Direction.TARGETED:
        reference_label = REF_TARGET
        y = build_target(target_spec, clean_fd.point)
        score_ref = y
    else:
        y = np.array(clean_fd.point, dtype=np.float64)
        if window.truth is not None:
            reference_label = REF_TRUTH
            score_ref = window.truth
        else:
            reference_label = REF_CLEAN
            score_ref = clean_fd.point

    eb = effective_budget(budget, window)
    obj = AttackObjective(model, window, y, loss_kind=loss_kind, direction=direction)
    result = run_attack(obj, eb, attack_cfg)
    adv_fd = model.predict(window.perturbed(result.delta))

    flags: list[str] = []
    e_clean, flag = forecast_error(metric, clean_fd, score_ref)
    if flag:
        flags.append(flag)
    e_adv, flag = forecast_error(metric, adv_fd, score_ref)
    if flag and flag not in flags:
        flags.append(flag)
    if not result.converged:
        flags.append("truncated")
    red = relative_error_deviation(e_clean, e_adv, direction).red
    rec = record(reference_label, e_clean, e_adv, red, result.queries_used, False, flags)
    return WindowOutcome(
        record=rec,
        clean_forecast=clean_fd.point,
        adv_forecast=adv_fd.point,
        target=y if direction is Direction.TARGETED else None,
        result=result,
    )


def evaluate_window(
    model: ForecastModel,
    window: Window,
    attack_cfg: AttackConfig,
    budget: Budget,
    direction: Direction = Direction.UNTARGETED,
    target_spec: TargetSpec | None = None,
    metric: MetricKind = MetricKind.NMAE,
    loss_kind: LossKind = LossKind.MSE,
    dataset_id: str = "",
) -> EvalRecord:
    """Evaluate one window under one attack and budget; see module docs."""
    return evaluate_window_outcome(
        model,
        window,
        attack_cfg,
        budget,
        direction,
        target_spec,
        metric,
        loss_kind,
        dataset_id,
    ).record


# ---------------------------------------------------------------------------
# Grid runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridResult:
    records: tuple
    summary: dict
    curves: tuple
    partial: bool


def _cell_seed(base: int, *indices: int) -> int:
    ss = np.random.SeedSequence([int(base), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _error_record(model, dataset_id, window, budget, attack_cfg, direction, metric, exc) -> EvalRecord:
    nan = float("nan")
    return EvalRecord(
        model_id=model.model_id,
        dataset_id=dataset_id,
        window_origin=window.origin_index,
        epsilon=budget.epsilon,
        ratio=budget.ratio,
        method=attack_cfg.method,
        direction=direction.label,
        metric=metric.value,
        reference="",
        e_clean=nan,
        e_adv=nan,
        red=nan,
        queries=0,
        skipped_degenerate=False,
        flags=(f"error:{type(exc).__name__}", _flag_safe(str(exc))),
    )


def _flag_safe(text: str) -> str:
    return text[:120].replace("|", "/").replace("\n", " ").replace("\r", " ")


def run_grid(cfg: ExperimentConfig, series: list[TimeSeries] | None = None) -> GridResult:
    """Sweep models x windows x budget grid x attacks; fail soft per cell.

    ``series`` overrides the dataset path, which keeps desk experiments and
    tests free of temporary files.  Two runs with an equal config and seed
    produce identical records, hence byte-identical reports.
    """
    if series is None:
        if not cfg.dataset:
            raise ConfigError("config has no dataset path and no series were passed")
        series = load_dataset(cfg.dataset)
    tagged_windows: list[tuple[str, Window]] = []
    for s in series:
        for w in windows_from_series(s, cfg.context_len, cfg.horizon, cfg.windows_per_series):
            tagged_windows.append((s.id, w))
    if not tagged_windows:
        raise ConfigError(
            f"no window of {cfg.context_len}+{cfg.horizon} points fits any of the {len(series)} series"
        )

    models: list[ForecastModel] = []
    records: list[EvalRecord] = []
    partial = False
    try:
        for spec in cfg.models:
            models.append(build_model(spec))
        for mi, model in enumerate(models):
            for wi, (sid, window) in enumerate(tagged_windows):
                for ei, eps in enumerate(cfg.epsilons):
                    for ri, ratio in enumerate(cfg.ratios):
                        budget = Budget(epsilon=eps, ratio=ratio)
                        for ai, atk in enumerate(cfg.attacks):
                            cell_cfg = dataclasses.replace(
                                atk, seed=_cell_seed(cfg.seed, mi, wi, ei, ri, ai)
                            )
                            try:
                                rec = evaluate_window(
                                    model,
                                    window,
                                    cell_cfg,
                                    budget,
                                    cfg.direction,
                                    cfg.target,
                                    cfg.metric,
                                    cfg.loss_kind,
                                    dataset_id=sid,
                                )
                            except ToolkitError as exc:
                                rec = _error_record(
                                    model, sid, window, budget, cell_cfg, cfg.direction, cfg.metric, exc
                                )
                                partial = True
                            records.append(rec)
    finally:
        for model in models:
            close_model(model)

    summary = summarize_records(records, config=cfg.to_dict(), seed=cfg.seed, partial=partial)
    curves = curves_from_records(records)
    return GridResult(records=tuple(records), summary=summary, curves=tuple(curves), partial=partial)


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def summarize_records(
    records, config: dict | None = None, seed: int | None = None, partial: bool | None = None
) -> dict:
    """Aggregate records into per-cell means plus micro/macro grand means.

    ``mean_micro`` averages RED over every live record; ``mean_macro``
    averages the per-dataset means, so small datasets count as much as
    large ones.
    """
    records = list(records)
    live = [r for r in records if r.live]
    cells: dict[tuple, list] = {}
    for r in live:
        cells.setdefault((r.model_id, r.method, r.epsilon, r.ratio), []).append(r)
    cell_rows = [
        {
            "model_id": key[0],
            "method": key[1],
            "epsilon": key[2],
            "ratio": key[3],
            "mean_red": _mean([r.red for r in group]),
            "mean_e_clean": _mean([r.e_clean for r in group]),
            "mean_e_adv": _mean([r.e_adv for r in group]),
            "n": len(group),
        }
        for key, group in sorted(cells.items())
    ]
    by_dataset: dict[str, list] = {}
    for r in live:
        by_dataset.setdefault(r.dataset_id, []).append(r.red)
    macro_parts = [float(np.mean(v)) for _, v in sorted(by_dataset.items())]
    summary = {
        "toolkit_version": __version__,
        "records": len(records),
        "live": len(live),
        "skipped": sum(1 for r in records if r.skipped_degenerate),
        "failed": sum(1 for r in records if r.failed),
        "mean_micro": _mean([r.red for r in live]),
        "mean_macro": _mean(macro_parts),
        "cells": cell_rows,
    }
    if seed is not None:
        summary["seed"] = seed
    if partial is not None:
        summary["partial"] = partial
    if config is not None:
        summary["config"] = copy.deepcopy(config)
    return summary


def curves_from_records(records) -> list[dict]:
    """Error-versus-epsilon rows per (model, method, ratio), for plotting."""
    groups: dict[tuple, list] = {}
    for r in records:
        if r.live:
            groups.setdefault((r.model_id, r.method, r.ratio, r.epsilon), []).append(r)
    return [
        {
            "model_id": key[0],
            "method": key[1],
            "ratio": key[2],
            "epsilon": key[3],
            "mean_e_adv": _mean([r.e_adv for r in group]),
            "mean_red": _mean([r.red for r in group]),
            "n": len(group),
        }
        for key, group in sorted(groups.items())
    ]


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def localize_vulnerability(
    model: ForecastModel,
    windows,
    k: int = 25,
    loss_kind: LossKind = LossKind.MSE,
) -> np.ndarray:
    """Per-position counts of how often a position lands in the top-k.

    For each window the gradient magnitude of the clean-input loss is
    ranked (magnitude first, then recency: the higher index wins ties).
    Positions that do not respond at all are never marked while any
    position does; a completely flat gradient falls back to marking the k
    most recent positions.  The reference is the window's truth when
    present, else the clean forecast.
    """
    windows = list(windows)
    if not windows:
        raise InvalidInput("at least one window is required")
    if k < 1:
        raise InvalidInput("k must be >= 1")
    if not model.capabilities.gradient:
        raise NoGradientCapability(f"{model.model_id} does not expose input gradients")
    length = windows[0].length
    if any(w.length != length for w in windows):
        raise InvalidInput("all windows must share one context length")
    counts = np.zeros(length, dtype=np.int64)
    for window in windows:
        reference = window.truth if window.truth is not None else model.predict(window).point
        grad = model.input_gradient(window, reference, loss_kind, Direction.UNTARGETED)
        mag = np.abs(np.asarray(grad, dtype=np.float64))
        order = np.lexsort((-np.arange(length), -mag))
        ranked = [int(i) for i in order if mag[i] > 0.0]
        marked = ranked[:k] if ranked else [int(i) for i in order[:k]]
        counts[marked] += 1
    return counts


def _moving_average_trend(x: np.ndarray, period: int) -> np.ndarray:
    if period % 2 == 1:
        kernel = np.full(period, 1.0 / period)
        half = (period - 1) // 2
    else:
        kernel = np.concatenate(([0.5], np.ones(period - 1), [0.5])) / period
        half = period // 2
    trend = np.full(x.size, np.nan)
    trend[half : x.size - half] = np.convolve(x, kernel, mode="valid")
    return trend


def _decompose(x: np.ndarray, period: int):
    trend = _moving_average_trend(x, period)
    detrended = x - trend
    phase_means = np.array([np.nanmean(detrended[p::period]) for p in range(period)])
    phase_means = phase_means - phase_means.mean()
    seasonal = np.resize(phase_means, x.size)
    residual = x - trend - seasonal
    return trend, seasonal, residual


def _component_corr(a: np.ndarray, b: np.ndarray) -> float:
    valid = np.isfinite(a) & np.isfinite(b)
    a = a[valid]
    b = b[valid]
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt(np.sum(da * da)))
    nb = float(np.sqrt(np.sum(db * db)))
    if na == 0.0 or nb == 0.0:
        if na == 0.0 and nb == 0.0 and np.array_equal(a, b):
            return 1.0
        return float("nan")
    return float(np.dot(da, db) / (na * nb))


def decomposition_consistency(clean, adv, period: int) -> dict:
    """Componentwise Pearson correlation after additive decomposition.

    Both sequences are split into a centered moving-average trend, a
    zero-mean per-phase seasonal component, and a residual; each component
    pair is correlated on its valid overlap.  A zero-variance component
    correlates at 1.0 only when both sides are constant and equal,
    otherwise the correlation is undefined and reported as NaN.
    """
    a = np.asarray(clean, dtype=np.float64)
    b = np.asarray(adv, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
        raise InvalidInput("clean and adv must be 1-D sequences of equal length")
    if period < 2:
        raise InvalidInput("period must be >= 2")
    if a.size < 2 * period:
        raise InvalidInput(f"need at least {2 * period} points for period {period}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInput("sequences contain NaN or Inf")
    ta, sa, ra = _decompose(a, period)
    tb, sb, rb = _decompose(b, period)
    return {
        "trend_corr": _component_corr(ta, tb),
        "seasonal_corr": _component_corr(sa, sb),
        "residual_corr": _component_corr(ra, rb),
    }


def transfer_eval(
    source: ForecastModel,
    targets,
    attack_cfg: AttackConfig,
    budget: Budget,
    windows,
    direction: Direction = Direction.UNTARGETED,
    target_spec: TargetSpec | None = None,
    metric: MetricKind = MetricKind.NMAE,
    loss_kind: LossKind = LossKind.MSE,
    dataset_id: str = "",
) -> dict:
    """Craft on the source, replay the same perturbation on every target.

    The source's own records coincide bit-exactly with direct evaluation.
    Other targets are scored with two prediction queries (clean and
    perturbed forecast) against the same reference convention; their rows
    carry a ``transfer-from`` flag naming the source.
    """
    windows = list(windows)
    if not windows:
        raise InvalidInput("at least one window is required")
    targets = list(targets)
    if not targets:
        raise InvalidInput("at least one target model is required")
    if len({t.model_id for t in targets}) != len(targets):
        raise ConfigError("target model ids must be unique")
    length = windows[0].length
    for model in [source, *targets]:
        if model.input_len is not None and model.input_len != length:
            raise ConfigError(
                f"{model.model_id} expects context length {model.input_len}, windows have {length}"
            )
    if any(w.length != length for w in windows):
        raise ConfigError("all windows must share one context length")

    out: dict[str, list[EvalRecord]] = {t.model_id: [] for t in targets}
    for window in windows:
        outcome = evaluate_window_outcome(
            source, window, attack_cfg, budget, direction, target_spec, metric, loss_kind, dataset_id
        )
        for target in targets:
            if target is source:
                out[target.model_id].append(outcome.record)
                continue
            if outcome.record.skipped_degenerate:
                out[target.model_id].append(
                    dataclasses.replace(outcome.record, model_id=target.model_id)
                )
                continue
            delta = outcome.result.delta
            clean_fd = target.predict(window)
            adv_fd = target.predict(window.perturbed(delta))
            if direction is Direction.TARGETED:
                reference_label = REF_TARGET
                score_ref = build_target(target_spec, clean_fd.point)
            elif window.truth is not None:
                reference_label = REF_TRUTH
                score_ref = window.truth
            else:
                reference_label = REF_CLEAN
                score_ref = clean_fd.point
            flags = [f"transfer-from:{source.model_id}"]
            e_clean, flag = forecast_error(metric, clean_fd, score_ref)
            if flag:
                flags.append(flag)
            e_adv, flag = forecast_error(metric, adv_fd, score_ref)
            if flag and flag not in flags:
                flags.append(flag)
            red = relative_error_deviation(e_clean, e_adv, direction).red
            out[target.model_id].append(
                EvalRecord(
                    model_id=target.model_id,
                    dataset_id=dataset_id,
                    window_origin=window.origin_index,
                    epsilon=budget.epsilon,
                    ratio=budget.ratio,
                    method=attack_cfg.method,
                    direction=direction.label,
                    metric=metric.value,
                    reference=reference_label,
                    e_clean=e_clean,
                    e_adv=e_adv,
                    red=red,
                    queries=2,
                    skipped_degenerate=False,
                    flags=tuple(flags),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _write_csv(path: str, header, rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def emit_report(
    records,
    out_dir: str,
    summary: dict | None = None,
    curves=None,
    trajectories=None,
) -> dict:
    """Write records.csv (always) plus optional summary/curves/trajectories.

    Returns the paths written, keyed by artifact name.
    """
    records = list(records)
    if not records:
        raise InvalidInput("no records to report")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from None
    paths: dict[str, str] = {}

    records_path = os.path.join(out_dir, "records.csv")
    _write_csv(records_path, RECORD_COLUMNS, [r.to_row() for r in records])
    paths["records"] = records_path

    if summary is not None:
        summary_path = os.path.join(out_dir, "summary.json")
        try:
            with open(summary_path, "w", encoding="utf-8") as fh:
                json.dump(summary, fh, indent=2, allow_nan=False)
                fh.write("\n")
        except OSError as exc:
            raise IoError(f"cannot write {summary_path}: {exc}") from None
        except ValueError as exc:
            raise InvalidInput(f"summary contains non-finite values: {exc}") from None
        paths["summary"] = summary_path

    if curves is not None:
        header = ("model_id", "method", "ratio", "epsilon", "mean_e_adv", "mean_red", "n")
        rows = [
            [
                c["model_id"],
                c["method"],
                repr(float(c["ratio"])),
                repr(float(c["epsilon"])),
                repr(float(c["mean_e_adv"])),
                repr(float(c["mean_red"])),
                str(c["n"]),
            ]
            for c in curves
        ]
        curves_path = os.path.join(out_dir, "curves.csv")
        _write_csv(curves_path, header, rows)
        paths["curves"] = curves_path

    if trajectories is not None:
        traj_path = os.path.join(out_dir, "trajectories.json")
        try:
            with open(traj_path, "w", encoding="utf-8") as fh:
                json.dump(trajectories, fh, indent=2, allow_nan=False)
                fh.write("\n")
        except OSError as exc:
            raise IoError(f"cannot write {traj_path}: {exc}") from None
        paths["trajectories"] = traj_path
    return paths


def parse_records_csv(path: str) -> list[EvalRecord]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(RECORD_COLUMNS):
                raise InvalidInput(f"{path} does not look like a records file")
            return [EvalRecord.from_row(row) for row in reader]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def trajectory_entries(outcomes) -> list[dict]:
    """JSON-ready clean/adv/target trajectories from window outcomes."""
    entries = []
    for o in outcomes:
        if o.clean_forecast is None or o.adv_forecast is None:
            continue
        entry = {
            "model_id": o.record.model_id,
            "dataset_id": o.record.dataset_id,
            "window_origin": o.record.window_origin,
            "clean": [float(v) for v in o.clean_forecast],
            "adv": [float(v) for v in o.adv_forecast],
        }
        if o.target is not None:
            entry["target"] = [float(v) for v in o.target]
        if o.result is not None:
            entry["delta"] = [float(v) for v in o.result.delta]
        entries.append(entry)
    return entries
