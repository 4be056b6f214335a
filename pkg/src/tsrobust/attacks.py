"""Attack engine: budget-constrained perturbation search against a forecaster.

Every attack maximizes the signed objective ``sign * loss(f(x + delta), y)``
over the feasible set given by an :class:`~tsrobust.series.EffectiveBudget`.
The sign is +1 for untargeted runs (push the forecast away from the
reference) and -1 for targeted runs (pull it toward the reference).

Four search strategies are provided:

* ``fgsm``: one projected step of ``step_bound * sign(gradient)``.
* ``pgd``: iterated projected sign-gradient ascent, returning the best
  evaluated iterate.
* ``zoo_attack``: gradient-free ascent on central-difference estimates,
  either plain scaled steps or Adam-normalized steps.
* ``simba_attack``: orthonormal-direction search that keeps a candidate
  only when it strictly improves the objective, so its trace is monotone.

White-box attacks need a model with the gradient capability; black-box
attacks only ever call ``predict``.  ``queries_used`` on the result counts
exactly the prediction queries spent, and the returned ``delta`` is always
a fixed point of the feasible-set projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bases import BasisSpec, orthonormal_basis
from .errors import BridgeTimeout, InvalidInput, QueryLimitExceeded
from .forecasters import ForecastModel
from .series import Direction, EffectiveBudget, LossKind, Window, loss, project

__all__ = [
    "AttackConfig",
    "AttackObjective",
    "AttackResult",
    "objective_eval",
    "fgsm",
    "pgd",
    "zoo_gradient",
    "zoo_attack",
    "simba_attack",
    "run_attack",
    "ATTACK_METHODS",
]

ATTACK_METHODS = ("fgsm", "pgd", "zoo", "zoo_adam", "simba")

# Adam moment constants for the zoo_adam step rule.
_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AttackConfig:
    """Knobs shared by all attack methods.

    ``step_size`` and ``iterations`` default to the projected-ascent
    settings used throughout the evaluation protocol (0.05 for 300
    iterations).  ``mu`` is the probe radius for central differences,
    ``coord_batch`` optionally subsamples coordinates per estimation sweep,
    and ``query_limit`` caps prediction queries for the whole run.
    ``random_start`` draws one uniform starting point inside the feasible
    set instead of starting from zero.
    """

    method: str = "pgd"
    step_size: float = 0.05
    iterations: int = 300
    mu: float = 1e-3
    basis: BasisSpec = field(default_factory=BasisSpec)
    seed: int = 0
    query_limit: int | None = None
    coord_batch: int | None = None
    random_start: bool = False

    def __post_init__(self):
        if self.method not in ATTACK_METHODS:
            raise InvalidInput(f"unknown attack method {self.method!r}; expected {ATTACK_METHODS}")
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise InvalidInput("step_size must be finite and > 0")
        if int(self.iterations) < 1:
            raise InvalidInput("iterations must be >= 1")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise InvalidInput("mu must be finite and > 0")
        if self.query_limit is not None and int(self.query_limit) < 0:
            raise InvalidInput("query_limit must be >= 0")
        if self.coord_batch is not None and int(self.coord_batch) < 1:
            raise InvalidInput("coord_batch must be >= 1")

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "step_size": self.step_size,
            "iterations": self.iterations,
            "mu": self.mu,
            "basis": self.basis.to_dict(),
            "seed": self.seed,
            "random_start": self.random_start,
        }
        if self.query_limit is not None:
            out["query_limit"] = self.query_limit
        if self.coord_batch is not None:
            out["coord_batch"] = self.coord_batch
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AttackConfig":
        known = {
            "method",
            "step_size",
            "iterations",
            "mu",
            "basis",
            "seed",
            "query_limit",
            "coord_batch",
            "random_start",
        }
        unknown = set(data) - known
        if unknown:
            raise InvalidInput(f"unknown attack config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "basis" in kwargs:
            kwargs["basis"] = BasisSpec.from_dict(kwargs["basis"])
        return cls(**kwargs)


class AttackObjective:
    """Signed loss between the perturbed forecast and a fixed reference.

    Owns the query accounting for one attack run: every ``eval`` costs one
    prediction query, every ``gradient`` one gradient query.  When a query
    limit is armed, ``eval`` raises :class:`QueryLimitExceeded` instead of
    spending past the budget.
    """

    def __init__(
        self,
        model: ForecastModel,
        window: Window,
        reference,
        loss_kind: LossKind = LossKind.MSE,
        direction: Direction = Direction.UNTARGETED,
    ):
        reference = np.asarray(reference, dtype=np.float64)
        if reference.ndim != 1 or reference.size != window.horizon:
            raise InvalidInput("reference length must match the window horizon")
        if not np.all(np.isfinite(reference)):
            raise InvalidInput("reference contains NaN or Inf")
        self.model = model
        self.window = window
        self.reference = reference
        self.loss_kind = loss_kind
        self.direction = direction
        self.predict_queries = 0
        self.gradient_queries = 0
        self.last_forecast: np.ndarray | None = None
        self._limit: int | None = None

    @property
    def dim(self) -> int:
        return self.window.length

    def arm_query_limit(self, limit: int | None) -> None:
        """Cap prediction queries from this point on (None lifts the cap)."""
        self._limit = None if limit is None else self.predict_queries + int(limit)

    def eval(self, delta: np.ndarray) -> float:
        """Objective value at ``delta``; exactly one prediction query."""
        if self._limit is not None and self.predict_queries + 1 > self._limit:
            raise QueryLimitExceeded("prediction query budget exhausted")
        fd = self.model.predict(self.window.perturbed(delta))
        self.predict_queries += 1
        self.last_forecast = fd.point
        return self.direction.sign * loss(self.loss_kind, fd.point, self.reference)

    def gradient(self, delta: np.ndarray) -> np.ndarray:
        """Exact objective gradient with respect to ``delta``."""
        grad = self.model.input_gradient(
            self.window.perturbed(delta), self.reference, self.loss_kind, self.direction
        )
        self.gradient_queries += 1
        return grad


def objective_eval(obj: AttackObjective, delta) -> float:
    """Evaluate the attack objective at one perturbation."""
    return obj.eval(np.asarray(delta, dtype=np.float64))


@dataclass(frozen=True)
class AttackResult:
    """Outcome of one attack run.

    ``objective_trace`` holds one value per evaluated iterate (NaN when the
    query budget vanished before anything could be evaluated), and
    ``adv_forecast`` is the forecast at the returned ``delta`` (None in the
    same zero-budget corner).  ``converged=False`` marks truncated runs.
    """

    delta: np.ndarray
    adv_forecast: np.ndarray | None
    objective_trace: np.ndarray
    queries_used: int
    converged: bool

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=np.float64)
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)
        trace = np.asarray(self.objective_trace, dtype=np.float64)
        if trace.size == 0:
            raise InvalidInput("objective trace must not be empty")
        trace.flags.writeable = False
        object.__setattr__(self, "objective_trace", trace)


class _BestTracker:
    """Keeps the best (objective, delta, forecast) triple seen so far."""

    def __init__(self):
        self.value = -math.inf
        self.delta: np.ndarray | None = None
        self.forecast: np.ndarray | None = None

    def offer(self, value: float, delta: np.ndarray, forecast: np.ndarray | None) -> None:
        if value > self.value:
            self.value = value
            self.delta = delta.copy()
            self.forecast = None if forecast is None else forecast.copy()


def _result(best: _BestTracker, eb, trace, queries, converged) -> AttackResult:
    delta = best.delta if best.delta is not None else np.zeros(eb.length)
    if not trace:
        trace = [math.nan]
    return AttackResult(
        delta=delta,
        adv_forecast=best.forecast,
        objective_trace=np.asarray(trace, dtype=np.float64),
        queries_used=queries,
        converged=converged,
    )


def fgsm(obj: AttackObjective, eb: EffectiveBudget, cfg: AttackConfig | None = None) -> AttackResult:
    """Single projected step along the sign of the gradient at zero."""
    cfg = cfg or AttackConfig(method="fgsm")
    start = obj.predict_queries
    obj.arm_query_limit(cfg.query_limit)
    grad = obj.gradient(np.zeros(eb.length))
    delta = project(eb.step_bound * np.sign(grad), eb)
    trace: list[float] = []
    forecast = None
    converged = True
    try:
        trace.append(obj.eval(delta))
        forecast = obj.last_forecast
    except (QueryLimitExceeded, BridgeTimeout):
        converged = False
    return AttackResult(
        delta=delta,
        adv_forecast=forecast,
        objective_trace=np.asarray(trace or [math.nan]),
        queries_used=obj.predict_queries - start,
        converged=converged,
    )


def pgd(obj: AttackObjective, eb: EffectiveBudget, cfg: AttackConfig | None = None) -> AttackResult:
    """Projected sign-gradient ascent; returns the best evaluated iterate.

    Starts from zero unless ``random_start`` draws one uniform point inside
    the feasible set.  Each iteration costs one gradient query plus one
    prediction query for the trace.
    """
    cfg = cfg or AttackConfig(method="pgd")
    start = obj.predict_queries
    obj.arm_query_limit(cfg.query_limit)
    if cfg.random_start and eb.step_bound > 0:
        rng = np.random.default_rng(cfg.seed)
        raw = np.zeros(eb.length)
        raw[eb.mask] = rng.uniform(-eb.step_bound, eb.step_bound, size=eb.mask.size)
        delta = project(raw, eb)
    else:
        delta = np.zeros(eb.length)
    best = _BestTracker()
    trace: list[float] = []
    converged = True
    try:
        value = obj.eval(delta)
        trace.append(value)
        best.offer(value, delta, obj.last_forecast)
        for _ in range(cfg.iterations):
            grad = obj.gradient(delta)
            delta = project(delta + cfg.step_size * np.sign(grad), eb)
            value = obj.eval(delta)
            trace.append(value)
            best.offer(value, delta, obj.last_forecast)
    except (QueryLimitExceeded, BridgeTimeout):
        converged = False
    if best.delta is None:
        best.delta = delta
    return _result(best, eb, trace, obj.predict_queries - start, converged)


def zoo_gradient(obj: AttackObjective, delta: np.ndarray, index: int, mu: float) -> float:
    """Central-difference estimate of one objective partial derivative.

    Costs two prediction queries; the estimation error decays with the
    square of the probe radius.
    """
    if not (0 <= index < obj.dim):
        raise InvalidInput(f"coordinate {index} out of range for dimension {obj.dim}")
    if not (math.isfinite(mu) and mu > 0):
        raise InvalidInput("mu must be finite and > 0")
    probe = np.zeros(obj.dim)
    probe[index] = mu
    up = obj.eval(delta + probe)
    down = obj.eval(delta - probe)
    return (up - down) / (2.0 * mu)


def zoo_attack(obj: AttackObjective, eb: EffectiveBudget, cfg: AttackConfig) -> AttackResult:
    """Gradient-free ascent on central-difference gradient estimates.

    Per iteration the masked coordinates (all of them, or a seeded batch of
    ``coord_batch``) are probed at ``delta +/- mu e_i``, which costs
    ``2 * coords`` prediction queries.  The step rule is either a plain
    ``step_size * estimate`` move or an Adam-normalized move for
    ``method="zoo_adam"``; every iterate is projected back onto the
    feasible set.  A completed run returns the final iterate; a truncated
    run returns the iterate whose probe-mean proxy (an O(mu^2) estimate of
    the objective) was best.  One final query scores the returned delta
    exactly.
    """
    start = obj.predict_queries
    obj.arm_query_limit(cfg.query_limit)
    rng = np.random.default_rng(cfg.seed)
    use_adam = cfg.method == "zoo_adam"
    m = np.zeros(eb.length)
    v = np.zeros(eb.length)
    t = 0
    delta = np.zeros(eb.length)
    best_proxy = -math.inf
    best_delta = delta.copy()
    trace: list[float] = []
    converged = True
    probe = np.zeros(eb.length)
    try:
        for _ in range(cfg.iterations):
            if cfg.coord_batch is not None and cfg.coord_batch < eb.mask.size:
                coords = np.sort(rng.choice(eb.mask, size=cfg.coord_batch, replace=False))
            else:
                coords = eb.mask
            estimate = np.zeros(eb.length)
            probe_values = []
            for i in coords:
                probe[:] = 0.0
                probe[i] = cfg.mu
                up = obj.eval(delta + probe)
                down = obj.eval(delta - probe)
                estimate[i] = (up - down) / (2.0 * cfg.mu)
                probe_values.append(0.5 * (up + down))
            proxy = float(np.mean(probe_values))
            trace.append(proxy)
            if proxy > best_proxy:
                best_proxy = proxy
                best_delta = delta.copy()
            if use_adam:
                t += 1
                m = _ADAM_BETA1 * m + (1.0 - _ADAM_BETA1) * estimate
                v = _ADAM_BETA2 * v + (1.0 - _ADAM_BETA2) * estimate * estimate
                mhat = m / (1.0 - _ADAM_BETA1**t)
                vhat = v / (1.0 - _ADAM_BETA2**t)
                step = cfg.step_size * mhat / (np.sqrt(vhat) + _ADAM_EPS)
            else:
                step = cfg.step_size * estimate
            delta = project(delta + step, eb)
        chosen = delta
    except (QueryLimitExceeded, BridgeTimeout):
        converged = False
        chosen = best_delta
    forecast = None
    try:
        trace.append(obj.eval(chosen))
        forecast = obj.last_forecast
    except (QueryLimitExceeded, BridgeTimeout):
        converged = False
    return AttackResult(
        delta=chosen,
        adv_forecast=forecast,
        objective_trace=np.asarray(trace or [math.nan]),
        queries_used=obj.predict_queries - start,
        converged=converged,
    )


def _masked_directions(basis: np.ndarray, eb: EffectiveBudget) -> np.ndarray:
    """Restrict basis rows to the mask support and renormalize.

    Off-mask coordinates are zeroed; rows whose remaining norm is
    numerically zero are dropped.
    """
    masked = np.zeros_like(basis)
    masked[:, eb.mask] = basis[:, eb.mask]
    norms = np.linalg.norm(masked, axis=1)
    keep = norms >= 1e-10
    return masked[keep] / norms[keep, None]


def simba_attack(obj: AttackObjective, eb: EffectiveBudget, cfg: AttackConfig) -> AttackResult:
    """Orthonormal-direction descent-free search with monotone objective.

    Directions are drawn without replacement from a seeded shuffle of the
    configured basis (restricted to the mask support).  For each direction
    the candidates ``delta + a*q`` and then ``delta - a*q`` are projected
    onto the feasible set and accepted only on strict improvement of the
    projected candidate, so the recorded objective trace never decreases.
    """
    start = obj.predict_queries
    obj.arm_query_limit(cfg.query_limit)
    rng = np.random.default_rng(cfg.seed)
    directions = _masked_directions(orthonormal_basis(cfg.basis, eb.length), eb)
    order = rng.permutation(directions.shape[0])
    delta = np.zeros(eb.length)
    best = _BestTracker()
    trace: list[float] = []
    converged = True
    try:
        current = obj.eval(delta)
        trace.append(current)
        best.offer(current, delta, obj.last_forecast)
        trials = 0
        for idx in order:
            if trials >= cfg.iterations:
                break
            q = directions[idx]
            for sign in (1.0, -1.0):
                candidate = project(delta + sign * cfg.step_size * q, eb)
                value = obj.eval(candidate)
                if value > current:
                    delta = candidate
                    current = value
                    best.offer(value, candidate, obj.last_forecast)
                    break
            trials += 1
            trace.append(current)
    except (QueryLimitExceeded, BridgeTimeout):
        converged = False
    if best.delta is None:
        best.delta = delta
    return _result(best, eb, trace, obj.predict_queries - start, converged)


def run_attack(obj: AttackObjective, eb: EffectiveBudget, cfg: AttackConfig) -> AttackResult:
    """Dispatch one attack run according to ``cfg.method``."""
    if cfg.method == "fgsm":
        return fgsm(obj, eb, cfg)
    if cfg.method == "pgd":
        return pgd(obj, eb, cfg)
    if cfg.method in ("zoo", "zoo_adam"):
        return zoo_attack(obj, eb, cfg)
    if cfg.method == "simba":
        return simba_attack(obj, eb, cfg)
    raise InvalidInput(f"unknown attack method {cfg.method!r}")
