"""Target transforms for directed attacks.

A targeted attack pulls the forecast toward an affine transform of the
clean prediction: ``y[t] = scale * clean[t] + bias(t)``.  The bias is
either absent, a linear drift in the step index, or a set of additive
offsets on chosen horizon steps.  Regions for local offsets are given in
normalized coordinates so the same experiment definition works across
horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InvalidInput
from .series import _check_vector

__all__ = [
    "TargetSpec",
    "build_target",
    "scaling",
    "flipping",
    "drifting",
    "local_offset",
    "named_transform",
    "normalized_region_steps",
]


@dataclass(frozen=True)
class TargetSpec:
    """Affine target description: scale plus at most one bias term.

    ``drift`` adds ``drift * t`` with t counted 1..T over the horizon;
    ``offsets`` adds a fixed shift on selected 0-based horizon steps.
    """

    scale: float = 1.0
    drift: float | None = None
    offsets: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self):
        if not math.isfinite(self.scale) or self.scale == 0.0:
            raise InvalidInput(f"scale must be finite and non-zero, got {self.scale!r}")
        if self.drift is not None and self.offsets is not None:
            raise InvalidInput("at most one bias term (drift or offsets) may be set")
        if self.drift is not None:
            if not math.isfinite(self.drift):
                raise InvalidInput("drift must be finite")
            object.__setattr__(self, "drift", float(self.drift))
        if self.offsets is not None:
            items = self.offsets.items() if isinstance(self.offsets, Mapping) else self.offsets
            cleaned = {}
            for step, shift in items:
                step = int(step)
                shift = float(shift)
                if step < 0:
                    raise InvalidInput(f"offset step {step} must be non-negative")
                if not math.isfinite(shift):
                    raise InvalidInput("offset shifts must be finite")
                cleaned[step] = shift
            if not cleaned:
                raise InvalidInput("offsets must not be empty when given")
            object.__setattr__(
                self, "offsets", tuple(sorted(cleaned.items()))
            )

    def to_dict(self) -> dict:
        out: dict = {"scale": self.scale}
        if self.drift is not None:
            out["drift"] = self.drift
        if self.offsets is not None:
            out["offsets"] = {str(step): shift for step, shift in self.offsets}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TargetSpec":
        if not isinstance(data, Mapping):
            raise InvalidInput(f"target spec must be a mapping, got {type(data).__name__}")
        unknown = set(data) - {"scale", "drift", "offsets"}
        if unknown:
            raise InvalidInput(f"unknown target spec keys: {sorted(unknown)}")
        offsets = data.get("offsets")
        if offsets is not None:
            offsets = {int(k): float(v) for k, v in offsets.items()}
        return cls(
            scale=float(data.get("scale", 1.0)),
            drift=None if data.get("drift") is None else float(data["drift"]),
            offsets=offsets,
        )


def build_target(spec: TargetSpec, clean) -> np.ndarray:
    """Materialize the target sequence for one clean forecast."""
    base = _check_vector(clean, "clean")
    horizon = base.size
    out = spec.scale * base
    if spec.drift is not None:
        out = out + spec.drift * np.arange(1, horizon + 1, dtype=np.float64)
    elif spec.offsets is not None:
        last = spec.offsets[-1][0]
        if last >= horizon:
            raise InvalidInput(f"offset step {last} outside horizon {horizon}")
        for step, shift in spec.offsets:
            out[step] += shift
    return out


def scaling(factor: float) -> TargetSpec:
    """Amplify or damp the forecast; the factor must stay positive."""
    if not factor > 0:
        raise InvalidInput(f"scaling factor must be > 0, got {factor!r}")
    return TargetSpec(scale=float(factor))


def flipping(factor: float = -1.0) -> TargetSpec:
    """Mirror the forecast across zero; the factor must be negative."""
    if not factor < 0:
        raise InvalidInput(f"flipping factor must be < 0, got {factor!r}")
    return TargetSpec(scale=float(factor))


def drifting(slope: float) -> TargetSpec:
    """Add a per-step linear drift on top of the unchanged forecast."""
    return TargetSpec(scale=1.0, drift=float(slope))


def normalized_region_steps(start: float, end: float, horizon: int) -> range:
    """Map a normalized region [start, end] of the horizon to step indices.

    The region covers steps floor(start * T) .. ceil(end * T) - 1 inclusive,
    so <0, 1> always covers the full horizon and adjacent regions tile it
    without gaps.
    """
    if not (0.0 <= start < end <= 1.0):
        raise InvalidInput(f"need 0 <= start < end <= 1, got ({start}, {end})")
    if horizon < 1:
        raise InvalidInput("horizon must be positive")
    lo = math.floor(start * horizon)
    hi = math.ceil(end * horizon) - 1
    return range(lo, hi + 1)


def local_offset(shift: float, region: tuple[float, float], horizon: int) -> TargetSpec:
    """Shift the forecast by a constant on a normalized sub-region."""
    steps = normalized_region_steps(region[0], region[1], horizon)
    return TargetSpec(scale=1.0, offsets={step: float(shift) for step in steps})


_NAMED = {
    "scaling": lambda params: scaling(float(params["factor"])),
    "flipping": lambda params: flipping(float(params.get("factor", -1.0))),
    "drifting": lambda params: drifting(float(params["slope"])),
    "local_offset": lambda params: local_offset(
        float(params["shift"]),
        (float(params["region"][0]), float(params["region"][1])),
        int(params["horizon"]),
    ),
}


def named_transform(name: str, **params) -> TargetSpec:
    """Construct a TargetSpec from a transform family name.

    Recognized names: scaling(factor), flipping(factor), drifting(slope),
    local_offset(shift, region=(start, end), horizon).
    """
    try:
        builder = _NAMED[name]
    except KeyError:
        raise InvalidInput(f"unknown target transform {name!r}; expected one of {sorted(_NAMED)}")
    try:
        return builder(params)
    except KeyError as exc:
        raise InvalidInput(f"target transform {name!r} is missing parameter {exc}")
