"""Core series containers, perturbation budgets, and feasible-set projection.

A perturbation budget couples a sparsity ratio with an amplitude ceiling:
at most ``ceil(ratio * L)`` context positions may change, and no position
may move by more than ``epsilon * var(context)``.  Tying the per-step bound
to the variance of the attacked window keeps budgets comparable across
series with very different scales.

Perturbations themselves are plain float64 arrays of the context length;
the feasible set for a window is fully described by :class:`EffectiveBudget`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, IoError

__all__ = [
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
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def _check_vector(values, name: str, allow_empty: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise InvalidInput(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A univariate series with an optional sampling-frequency tag."""

    values: np.ndarray
    id: str = "series"
    frequency_tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(_check_vector(self.values, "values")))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Window:
    """A forecasting instance: context of length L, horizon T, optional truth.

    ``origin_index`` is the absolute index of the first horizon step within
    the parent series (0 when the window stands alone).
    """

    context: np.ndarray
    horizon: int
    truth: np.ndarray | None = None
    origin_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "context", _freeze(_check_vector(self.context, "context")))
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise InvalidInput(f"horizon must be a positive integer, got {self.horizon!r}")
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.truth is not None:
            truth = _freeze(_check_vector(self.truth, "truth"))
            if truth.size != self.horizon:
                raise InvalidInput(
                    f"truth length {truth.size} does not match horizon {self.horizon}"
                )
            object.__setattr__(self, "truth", truth)

    @property
    def length(self) -> int:
        return int(self.context.size)

    def perturbed(self, delta: np.ndarray) -> "Window":
        """Return a copy of this window with ``delta`` added to the context."""
        delta = np.asarray(delta, dtype=np.float64)
        if delta.shape != self.context.shape:
            raise InvalidInput(
                f"delta length {delta.size} does not match context length {self.context.size}"
            )
        return Window(self.context + delta, self.horizon, self.truth, self.origin_index)


class LossKind(enum.Enum):
    """Base losses an attack objective can maximize or minimize."""

    MSE = "mse"
    MAE = "mae"


class Direction(enum.IntEnum):
    """Attack direction; the integer value is the sign applied to the loss."""

    UNTARGETED = 1
    TARGETED = -1

    @property
    def sign(self) -> float:
        return float(self.value)

    @property
    def label(self) -> str:
        return "untargeted" if self is Direction.UNTARGETED else "targeted"


MASK_LAST = "last"
MASK_EXPLICIT = "explicit"


@dataclass(frozen=True)
class Budget:
    """Scale-free perturbation budget.

    epsilon scales the context variance into a per-step amplitude bound;
    ratio caps the number of editable positions at ``ceil(ratio * L)``.
    The default mask policy edits the most recent positions; an explicit
    index set supports ablations on other regions.
    """

    epsilon: float
    ratio: float = 1.0
    mask_policy: str = MASK_LAST
    explicit_mask: tuple[int, ...] | None = None

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise InvalidInput(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if not (0 < self.ratio <= 1):
            raise InvalidInput(f"ratio must lie in (0, 1], got {self.ratio!r}")
        if self.mask_policy not in (MASK_LAST, MASK_EXPLICIT):
            raise InvalidInput(f"unknown mask policy {self.mask_policy!r}")
        if self.mask_policy == MASK_EXPLICIT:
            if not self.explicit_mask:
                raise InvalidInput("explicit mask policy requires a non-empty index set")
            idx = tuple(sorted(int(i) for i in set(self.explicit_mask)))
            if idx[0] < 0:
                raise InvalidInput("explicit mask indices must be non-negative")
            object.__setattr__(self, "explicit_mask", idx)
        elif self.explicit_mask is not None:
            raise InvalidInput("explicit_mask is only valid with the explicit mask policy")


@dataclass(frozen=True)
class EffectiveBudget:
    """A budget resolved against a concrete window.

    ``step_bound`` is the absolute per-position amplitude ceiling
    (epsilon times the population variance of the context) and ``mask``
    holds the sorted editable positions.
    """

    step_bound: float
    mask: np.ndarray
    length: int

    def __post_init__(self):
        if not math.isfinite(self.step_bound) or self.step_bound < 0:
            raise InvalidInput("step_bound must be finite and >= 0")
        mask = np.asarray(self.mask, dtype=np.int64)
        if mask.ndim != 1 or mask.size == 0:
            raise InvalidInput("mask must be a non-empty index vector")
        mask = np.unique(mask)
        if mask[0] < 0 or mask[-1] >= self.length:
            raise InvalidInput("mask indices out of range for the window length")
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "length", int(self.length))


def variance(values) -> float:
    """Population variance (divisor n) of a non-empty sequence."""
    arr = _check_vector(values, "values")
    return float(np.var(arr))


def effective_budget(budget: Budget, window: Window) -> EffectiveBudget:
    """Resolve a scale-free budget against one window.

    The last-steps policy selects the final ``ceil(ratio * L)`` positions of
    the context; an explicit policy passes its own index set through after a
    range check.
    """
    L = window.length
    step_bound = budget.epsilon * variance(window.context)
    if budget.mask_policy == MASK_LAST:
        k = math.ceil(budget.ratio * L)
        mask = np.arange(L - k, L, dtype=np.int64)
    else:
        mask = np.asarray(budget.explicit_mask, dtype=np.int64)
        if mask[-1] >= L:
            raise InvalidInput(
                f"explicit mask index {int(mask[-1])} out of range for context length {L}"
            )
    return EffectiveBudget(step_bound=step_bound, mask=mask, length=L)


def project(delta, eb: EffectiveBudget) -> np.ndarray:
    """Project a perturbation onto the feasible set of ``eb``.

    Off-mask coordinates are zeroed, on-mask coordinates are clamped to
    ``[-step_bound, +step_bound]``.  Feasible inputs are returned unchanged
    in value (idempotent).
    """
    arr = np.asarray(delta, dtype=np.float64)
    if arr.ndim != 1 or arr.size != eb.length:
        raise InvalidInput(
            f"delta length {arr.size} does not match budget length {eb.length}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("delta contains NaN or Inf")
    out = np.zeros(eb.length, dtype=np.float64)
    out[eb.mask] = np.clip(arr[eb.mask], -eb.step_bound, eb.step_bound)
    return out


def loss(kind: LossKind, pred, ref) -> float:
    """Mean squared or mean absolute error between two equal-length sequences."""
    p = _check_vector(pred, "pred")
    r = _check_vector(ref, "ref")
    if p.size != r.size:
        raise InvalidInput(f"length mismatch: pred has {p.size}, ref has {r.size}")
    if kind is LossKind.MSE:
        return float(np.mean((p - r) ** 2))
    if kind is LossKind.MAE:
        return float(np.mean(np.abs(p - r)))
    raise InvalidInput(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# CSV dataset format: header "id,timestamp,value", one observation per row,
# rows grouped per series id in time order.  The timestamp column may hold an
# ISO-8601 string, an integer index, or be empty; it is carried through for
# provenance but ordering follows file order.
# ---------------------------------------------------------------------------

CSV_HEADER = ("id", "timestamp", "value")


def load_series_csv(path) -> list[TimeSeries]:
    """Load every series from a ``id,timestamp,value`` CSV file."""
    order: list[str] = []
    buckets: dict[str, list[float]] = {}
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open series file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInput(f"{path}: empty file, expected header {CSV_HEADER}")
        if tuple(h.strip().lower() for h in header) != CSV_HEADER:
            raise InvalidInput(f"{path}: expected header {CSV_HEADER}, got {tuple(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise InvalidInput(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            sid = row[0].strip()
            if not sid:
                raise InvalidInput(f"{path}:{lineno}: empty series id")
            try:
                value = float(row[2])
            except ValueError:
                raise InvalidInput(f"{path}:{lineno}: unparseable value {row[2]!r}")
            if not math.isfinite(value):
                raise InvalidInput(f"{path}:{lineno}: non-finite value {row[2]!r}")
            if sid not in buckets:
                buckets[sid] = []
                order.append(sid)
            buckets[sid].append(value)
    if not order:
        raise InvalidInput(f"{path}: no observations found")
    return [TimeSeries(values=buckets[sid], id=sid) for sid in order]


def save_series_csv(path, series: Iterable[TimeSeries]) -> None:
    """Write series to CSV with integer-index timestamps."""
    try:
        handle = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write series file {path}: {exc}") from exc
    with handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for ts in series:
            for i, v in enumerate(ts.values):
                writer.writerow([ts.id, i, repr(float(v))])
