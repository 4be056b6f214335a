"""Adversarial robustness toolkit for time-series forecasters.

Craft sparse, amplitude-bounded perturbations against forecasting models,
score the damage with scale-invariant error metrics, and harden small
trainable forecasters with input smoothing or adversarial fine-tuning.
External forecasters join in over a line-delimited JSON bridge and are
attacked through the same interfaces as in-process models.
"""

from ._version import __version__
from .attacks import (
    ATTACK_METHODS,
    AttackConfig,
    AttackObjective,
    AttackResult,
    fgsm,
    objective_eval,
    pgd,
    run_attack,
    simba_attack,
    zoo_attack,
    zoo_gradient,
)
from .bases import BasisSpec, cartesian_basis, dct_basis, haar_basis, orthonormal_basis
from .bridge import (
    ERR_BAD_REQUEST,
    ERR_INTERNAL,
    ERR_NO_CAPABILITY,
    ERR_PARSE,
    ERR_VERSION,
    PROTOCOL_VERSION,
    BridgeClient,
    BridgeEndpoint,
    RemoteInfo,
    RemoteModel,
    StdioTransport,
    TcpTransport,
    connect,
    decode_message,
    encode_message,
    serve,
    serve_tcp,
)
from .defenses import (
    AdvTrainConfig,
    SmoothingConfig,
    SmoothingWrapper,
    dataset_fingerprint,
    finetune,
    iat_finetune,
    lat_finetune,
    smooth,
)
from .errors import (
    BridgeTimeout,
    ConfigError,
    DegenerateReference,
    DivergedTraining,
    InvalidInput,
    IoError,
    MissingDistribution,
    ModelError,
    NoGradientCapability,
    NoLatentCapability,
    NotTrainable,
    ProtocolError,
    QueryLimitExceeded,
    ToolkitError,
    VersionMismatch,
)
from .forecasters import (
    Capabilities,
    ForecastModel,
    LinearAR,
    MLPForecaster,
    SeasonalNaive,
    TrainConfig,
    checkpoint_dict,
    fit,
    load_checkpoint,
    model_from_checkpoint_dict,
    read_checkpoint,
    save_checkpoint,
)
from .harness import (
    DEFAULT_EPSILONS,
    DEFAULT_RATIOS,
    EvalRecord,
    ExperimentConfig,
    GridResult,
    RECORD_COLUMNS,
    WindowOutcome,
    build_model,
    close_model,
    curves_from_records,
    decomposition_consistency,
    emit_report,
    evaluate_window,
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
from .metrics import (
    ForecastDistribution,
    MetricKind,
    RedReport,
    crps,
    crps_empirical,
    forecast_error,
    nmae,
    nrmse,
    quantile_ensemble,
    relative_error_deviation,
)
from .series import (
    Budget,
    Direction,
    EffectiveBudget,
    LossKind,
    TimeSeries,
    Window,
    effective_budget,
    load_series_csv,
    loss,
    project,
    save_series_csv,
    variance,
)
from .synth import seasonal_series
from .targets import (
    TargetSpec,
    build_target,
    drifting,
    flipping,
    local_offset,
    named_transform,
    normalized_region_steps,
    scaling,
)

__all__ = [
    "__version__",
    # series and budgets
    "TimeSeries",
    "Window",
    "Budget",
    "EffectiveBudget",
    "LossKind",
    "Direction",
    "variance",
    "effective_budget",
    "project",
    "loss",
    "load_series_csv",
    "save_series_csv",
    "seasonal_series",
    # metrics
    "MetricKind",
    "ForecastDistribution",
    "RedReport",
    "nmae",
    "nrmse",
    "crps",
    "crps_empirical",
    "quantile_ensemble",
    "relative_error_deviation",
    "forecast_error",
    # targets
    "TargetSpec",
    "build_target",
    "scaling",
    "flipping",
    "drifting",
    "local_offset",
    "named_transform",
    "normalized_region_steps",
    # bases
    "BasisSpec",
    "cartesian_basis",
    "dct_basis",
    "haar_basis",
    "orthonormal_basis",
    # forecasters
    "Capabilities",
    "ForecastModel",
    "SeasonalNaive",
    "LinearAR",
    "MLPForecaster",
    "TrainConfig",
    "fit",
    "checkpoint_dict",
    "model_from_checkpoint_dict",
    "save_checkpoint",
    "read_checkpoint",
    "load_checkpoint",
    # attacks
    "ATTACK_METHODS",
    "AttackConfig",
    "AttackObjective",
    "AttackResult",
    "objective_eval",
    "run_attack",
    "fgsm",
    "pgd",
    "zoo_gradient",
    "zoo_attack",
    "simba_attack",
    # defenses
    "SmoothingConfig",
    "smooth",
    "SmoothingWrapper",
    "AdvTrainConfig",
    "finetune",
    "lat_finetune",
    "iat_finetune",
    "dataset_fingerprint",
    # bridge
    "PROTOCOL_VERSION",
    "ERR_PARSE",
    "ERR_VERSION",
    "ERR_NO_CAPABILITY",
    "ERR_BAD_REQUEST",
    "ERR_INTERNAL",
    "encode_message",
    "decode_message",
    "BridgeEndpoint",
    "BridgeClient",
    "RemoteInfo",
    "RemoteModel",
    "StdioTransport",
    "TcpTransport",
    "connect",
    "serve",
    "serve_tcp",
    # harness
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
    "trajectory_entries",
    # errors
    "ToolkitError",
    "InvalidInput",
    "ConfigError",
    "DegenerateReference",
    "MissingDistribution",
    "ModelError",
    "NoGradientCapability",
    "NoLatentCapability",
    "NotTrainable",
    "QueryLimitExceeded",
    "ProtocolError",
    "VersionMismatch",
    "BridgeTimeout",
    "DivergedTraining",
    "IoError",
]
