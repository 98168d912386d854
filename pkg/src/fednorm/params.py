"""Layer-segmented flat parameter vectors and the vector algebra built on them.

Every aggregation rule in this package is expressed over ParamVector: a
read-only float64 array tiled by named layer segments. All reductions in this
module accumulate strictly left to right (no pairwise or threaded reduction),
so repeated runs are bit-identical regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeMismatchError


@dataclass(frozen=True)
class Segment:
    """One named contiguous slice of a ParamVector."""

    name: str
    offset: int
    length: int


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Immutable float64 vector whose segments exactly tile [0, size).

    The values array is copied on construction and marked read-only, so a
    ParamVector can be shared freely across threads.
    """

    values: np.ndarray
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        raw = np.asarray(self.values, dtype=np.float64)
        if raw.ndim != 1:
            raise ValueError(f"values must be 1-D, got shape {raw.shape}")
        vals = raw.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        pos = 0
        for seg in segs:
            if seg.length < 0:
                raise ValueError(f"segment {seg.name!r} has negative length")
            if seg.offset != pos:
                raise ValueError(
                    f"segment {seg.name!r} starts at {seg.offset}, expected {pos}"
                )
            pos += seg.length
        if pos != vals.size:
            raise ValueError(f"segments tile {pos} values but vector has {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameter vector contains NaN or Inf")

    @property
    def size(self) -> int:
        return int(self.values.size)

    def segment_values(self, name: str) -> np.ndarray:
        for seg in self.segments:
            if seg.name == name:
                return self.values[seg.offset : seg.offset + seg.length]
        raise KeyError(name)


def _require_compatible(a: ParamVector, b: ParamVector, op: str) -> None:
    if a.segments == b.segments:
        return
    for sa, sb in zip(a.segments, b.segments):
        if sa != sb:
            raise ShapeMismatchError(
                f"{op}: segment mismatch, {sa.name!r}{(sa.offset, sa.length)} vs "
                f"{sb.name!r}{(sb.offset, sb.length)}"
            )
    raise ShapeMismatchError(
        f"{op}: segment count mismatch, {len(a.segments)} vs {len(b.segments)}"
    )


def _ordered_sum(x: np.ndarray) -> float:
    # cumsum is sequential by definition (each prefix is observable), which
    # gives the strict left-to-right order the determinism contract wants.
    if x.size == 0:
        return 0.0
    return float(np.cumsum(x)[-1])


def delta(w_new: ParamVector, w_old: ParamVector) -> ParamVector:
    """Update vector: trained weights minus the weights they started from."""
    _require_compatible(w_new, w_old, "delta")
    return ParamVector(w_new.values - w_old.values, w_new.segments)


def weighted_sum(terms: Sequence[tuple[float, ParamVector]]) -> ParamVector:
    """Sum of weight_k * v_k accumulated in list order.

    Raises:
        ValueError: on an empty term list.
        ShapeMismatchError: if any vector disagrees with the first.
    """
    if len(terms) == 0:
        raise ValueError("weighted_sum of an empty term list")
    first = terms[0][1]
    acc = np.zeros(first.size, dtype=np.float64)
    for weight, vec in terms:
        _require_compatible(first, vec, "weighted_sum")
        acc += float(weight) * vec.values
    return ParamVector(acc, first.segments)


def l2_norm(v: ParamVector) -> float:
    return math.sqrt(_ordered_sum(v.values * v.values))


def per_layer_norms(v: ParamVector) -> list[tuple[str, float]]:
    """L2 norm of each segment, in segment order."""
    out = []
    for seg in v.segments:
        part = v.values[seg.offset : seg.offset + seg.length]
        out.append((seg.name, math.sqrt(_ordered_sum(part * part))))
    return out


def axpy(alpha: float, x: ParamVector, y: ParamVector) -> ParamVector:
    """alpha * x + y."""
    _require_compatible(x, y, "axpy")
    return ParamVector(float(alpha) * x.values + y.values, x.segments)


def zeros_like(v: ParamVector) -> ParamVector:
    return ParamVector(np.zeros(v.size, dtype=np.float64), v.segments)
