"""Shared-edge histograms, Bhattacharyya coefficient and Hellinger distance."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from devstab.model import DevStabError, Histogram, ValidationError


class IncompatibleHistogramError(DevStabError, ValueError):
    """Histograms do not share bin edges."""


@dataclass(frozen=True)
class BinningSpec:
    """How two samples are binned onto common edges.

    Exactly one of ``bins``, ``width`` or ``edges`` applies; with none set
    the bin count is ``ceil(sqrt(n))`` for the smaller sample size ``n``.
    ``value_range`` pins the binned interval instead of the joint min/max;
    values outside it are not counted.
    """

    bins: Optional[int] = None
    width: Optional[float] = None
    edges: Optional[Tuple[float, ...]] = None
    value_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        given = [x is not None for x in (self.bins, self.width, self.edges)]
        if sum(given) > 1:
            raise ValidationError("set at most one of bins, width, edges")
        if self.bins is not None and int(self.bins) < 1:
            raise ValidationError(f"bin count must be >= 1, got {self.bins}")
        if self.width is not None and not float(self.width) > 0:
            raise ValidationError(f"bin width must be > 0, got {self.width}")
        if self.edges is not None:
            e = tuple(float(x) for x in self.edges)
            if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])):
                raise ValidationError("explicit edges must be strictly increasing (at least two)")
            object.__setattr__(self, "edges", e)
        if self.value_range is not None:
            lo, hi = (float(x) for x in self.value_range)
            if not hi > lo:
                raise ValidationError("value_range must satisfy lo < hi")
            object.__setattr__(self, "value_range", (lo, hi))

    @classmethod
    def fixed_count(cls, b: int, value_range=None) -> "BinningSpec":
        return cls(bins=int(b), value_range=value_range)

    @classmethod
    def fixed_width(cls, w: float, value_range=None) -> "BinningSpec":
        return cls(width=float(w), value_range=value_range)

    @classmethod
    def shared_edges(cls, edges: Sequence[float]) -> "BinningSpec":
        return cls(edges=tuple(edges))

    def bin_edges(self, *samples: np.ndarray) -> np.ndarray:
        """Edges covering all ``samples`` under this spec."""
        if self.edges is not None:
            return np.asarray(self.edges, dtype=float)
        if self.value_range is not None:
            lo, hi = self.value_range
        else:
            lo = min(float(np.min(s)) for s in samples)
            hi = max(float(np.max(s)) for s in samples)
        if self.width is not None:
            w = float(self.width)
            n = max(1, math.ceil((hi - lo) / w)) if hi > lo else 1
            edges = lo + w * np.arange(n + 1)
            if edges[-1] < hi:
                edges = np.append(edges, edges[-1] + w)
            return edges
        if hi == lo:
            # all values identical: one bin around them
            return np.array([lo - 0.5, hi + 0.5])
        b = self.bins if self.bins is not None else math.ceil(math.sqrt(min(len(s) for s in samples)))
        return np.linspace(lo, hi, int(b) + 1)


DEFAULT_BINNING = BinningSpec()


def _as_sample(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError(f"sample {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"sample {name} contains non-finite values")
    return arr


def histogram_on(values, edges: np.ndarray) -> Histogram:
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return Histogram(edges, counts)


def build_histograms(a, b, spec: BinningSpec = DEFAULT_BINNING) -> Tuple[Histogram, Histogram]:
    """Bin two samples onto identical edges."""
    xa, xb = _as_sample(a, "a"), _as_sample(b, "b")
    edges = spec.bin_edges(xa, xb)
    return histogram_on(xa, edges), histogram_on(xb, edges)


def _check_compatible(p: Histogram, q: Histogram) -> None:
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise IncompatibleHistogramError("histograms have different bin edges")
    if p.total == 0 or q.total == 0:
        raise ValidationError("histogram with zero total count")


def bhattacharyya(p: Histogram, q: Histogram) -> float:
    """Bhattacharyya coefficient ``sum_x sqrt(p(x) q(x))`` of two histograms.

    Evaluated on raw counts as ``sum sqrt(c_p c_q) / sqrt(N_p N_q)`` so that
    identical histograms give exactly 1 and disjoint ones exactly 0.
    """
    _check_compatible(p, q)
    cp = p.counts.astype(float)
    cq = q.counts.astype(float)
    bc = float(np.sum(np.sqrt(cp * cq)) / math.sqrt(float(p.total) * float(q.total)))
    return min(max(bc, 0.0), 1.0)


def hellinger(p: Histogram, q: Histogram) -> float:
    """Hellinger distance ``sqrt(1 - BC)`` in [0, 1]."""
    return math.sqrt(1.0 - bhattacharyya(p, q))


def hellinger_samples(a, b, spec: BinningSpec = DEFAULT_BINNING) -> float:
    """Hellinger distance between two raw samples binned under ``spec``."""
    return hellinger(*build_histograms(a, b, spec))
