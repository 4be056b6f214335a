"""Orthonormal search bases for black-box direction sampling.

Attacks that probe one direction at a time can search in the standard
coordinate basis, in a low-frequency cosine basis, or in a Haar wavelet
basis.  Frequency-limited bases concentrate the search on smooth
perturbations, which tend to be harder to spot in a plotted series.

Every basis is returned as a row matrix Q with Q @ Q.T = I to machine
precision; rows are ordered coarse to fine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

__all__ = ["BasisSpec", "orthonormal_basis", "cartesian_basis", "dct_basis", "haar_basis"]

_DROP_TOL = 1e-10


@dataclass(frozen=True)
class BasisSpec:
    """Which basis to search in, plus its sub-selection parameters.

    ``low_fraction`` applies to the cosine basis and keeps the lowest
    ``ceil(low_fraction * L)`` frequencies.  ``level`` applies to the Haar
    basis and, when set, restricts the search to approximation vectors that
    are constant on blocks of ``2**level`` samples.
    """

    kind: str = "cartesian"
    low_fraction: float = 1.0
    level: int | None = None

    def __post_init__(self):
        if self.kind not in ("cartesian", "dct", "haar"):
            raise InvalidInput(f"unknown basis kind {self.kind!r}")
        if not (0.0 < self.low_fraction <= 1.0):
            raise InvalidInput(f"low_fraction must lie in (0, 1], got {self.low_fraction!r}")
        if self.level is not None:
            if self.kind != "haar":
                raise InvalidInput("level restriction only applies to the haar basis")
            if int(self.level) < 0:
                raise InvalidInput("level must be >= 0")
            object.__setattr__(self, "level", int(self.level))

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "dct":
            out["low_fraction"] = self.low_fraction
        if self.kind == "haar" and self.level is not None:
            out["level"] = self.level
        return out

    @classmethod
    def from_dict(cls, data) -> "BasisSpec":
        if isinstance(data, str):
            return cls(kind=data)
        return cls(
            kind=data.get("kind", "cartesian"),
            low_fraction=float(data.get("low_fraction", 1.0)),
            level=data.get("level"),
        )


def _check_length(length: int) -> int:
    if not isinstance(length, (int, np.integer)) or length < 1:
        raise InvalidInput(f"basis length must be a positive integer, got {length!r}")
    return int(length)


def cartesian_basis(length: int) -> np.ndarray:
    return np.eye(_check_length(length), dtype=np.float64)


def dct_basis(length: int, low_fraction: float = 1.0) -> np.ndarray:
    """Rows of the orthonormal DCT-II matrix, lowest frequencies first.

    Row k evaluates cos(pi * (2n + 1) * k / (2L)) scaled by sqrt(1/L) for
    k = 0 and sqrt(2/L) otherwise; these rows are exactly the frequency
    atoms of the type-II discrete cosine transform.
    """
    L = _check_length(length)
    if not (0.0 < low_fraction <= 1.0):
        raise InvalidInput(f"low_fraction must lie in (0, 1], got {low_fraction!r}")
    keep = math.ceil(low_fraction * L)
    n = np.arange(L, dtype=np.float64)
    k = np.arange(keep, dtype=np.float64)[:, None]
    rows = np.cos(np.pi * (2.0 * n + 1.0) * k / (2.0 * L))
    scale = np.full(keep, math.sqrt(2.0 / L))
    scale[0] = math.sqrt(1.0 / L)
    return rows * scale[:, None]


def _haar_square(size: int, level: int | None) -> np.ndarray:
    """Haar basis for a power-of-two size, coarse rows first."""
    depth = int(math.log2(size))
    if level is not None:
        if level > depth:
            raise InvalidInput(f"level {level} too deep for padded size {size}")
        block = 2**level
        count = size // block
        rows = np.zeros((count, size), dtype=np.float64)
        amp = 1.0 / math.sqrt(block)
        for i in range(count):
            rows[i, i * block : (i + 1) * block] = amp
        return rows
    rows = np.zeros((size, size), dtype=np.float64)
    rows[0, :] = 1.0 / math.sqrt(size)
    r = 1
    for j in range(depth):
        support = size // (2**j)
        half = support // 2
        amp = 1.0 / math.sqrt(support)
        for k in range(2**j):
            start = k * support
            rows[r, start : start + half] = amp
            rows[r, start + half : start + support] = -amp
            r += 1
    return rows


def _gram_schmidt(rows: np.ndarray, limit: int) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Rows whose residual norm falls below the drop tolerance are discarded;
    at most ``limit`` vectors are kept.
    """
    kept: list[np.ndarray] = []
    for row in rows:
        v = row.astype(np.float64, copy=True)
        for _ in range(2):  # second pass scrubs rounding residue
            for u in kept:
                v -= (u @ v) * u
        norm = float(np.linalg.norm(v))
        if norm < _DROP_TOL:
            continue
        kept.append(v / norm)
        if len(kept) == limit:
            break
    if not kept:
        raise InvalidInput("basis construction produced no usable vectors")
    return np.stack(kept)


def haar_basis(length: int, level: int | None = None) -> np.ndarray:
    """Orthonormal Haar basis for any length.

    For power-of-two lengths this is the exact Haar matrix.  Otherwise the
    basis is built for the next power of two, each vector is truncated to
    the first ``length`` coordinates, and the truncated set is
    re-orthonormalized; vectors that collapse under truncation are dropped.
    """
    L = _check_length(length)
    size = 1 << (L - 1).bit_length()
    square = _haar_square(size, level)
    if size == L:
        return square
    return _gram_schmidt(square[:, :L], limit=L)


def orthonormal_basis(spec: BasisSpec, length: int) -> np.ndarray:
    if spec.kind == "cartesian":
        return cartesian_basis(length)
    if spec.kind == "dct":
        return dct_basis(length, spec.low_fraction)
    return haar_basis(length, spec.level)
