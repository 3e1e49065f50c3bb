"""Temporal, spatial and inter-device stability built on Hellinger distances."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from devstab.distance import DEFAULT_BINNING, BinningSpec, build_histograms, hellinger, histogram_on
from devstab.model import DistanceMatrix, MetricSeries, ValidationError, location_label

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = timedelta(days=90)
DEFAULT_LAG = timedelta(days=30)
DEFAULT_MIN_COUNT = 10


@dataclass(frozen=True)
class TemporalStabilityResult:
    """Distance between a current window and its reference at each evaluation time.

    ``reference`` is ``None`` for a sliding reference ending ``offset``
    before the current window's end, or
    the fixed origin ``t0`` whose window ``[t0, t0 + window)`` is compared
    against every later window. ``skipped`` lists evaluation times dropped
    because a window held fewer than ``min_count`` values.
    """

    times: Tuple[datetime, ...]
    distances: Tuple[float, ...]
    window: timedelta
    lag: timedelta
    stride: timedelta
    reference: Optional[datetime] = None
    skipped: Tuple[datetime, ...] = ()
    min_count: int = DEFAULT_MIN_COUNT
    offset: Optional[timedelta] = None

    @property
    def mode(self) -> str:
        return "sliding" if self.reference is None else "origin"

    @property
    def median(self) -> float:
        return float(np.median(self.distances)) if self.distances else float("nan")

    @property
    def max(self) -> float:
        return float(np.max(self.distances)) if self.distances else float("nan")


def _window_values(times: np.ndarray, values: np.ndarray, lo: np.datetime64, hi: np.datetime64) -> np.ndarray:
    i, j = np.searchsorted(times, [lo, hi], side="left")
    return values[i:j]


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _to_np(t: datetime) -> np.datetime64:
    # compare on the absolute timeline
    return np.datetime64((t - _EPOCH) // timedelta(microseconds=1), "us")


def temporal_stability(
    series: MetricSeries,
    window: timedelta = DEFAULT_WINDOW,
    lag: timedelta = DEFAULT_LAG,
    reference: Optional[datetime] = None,
    spec: BinningSpec = DEFAULT_BINNING,
    stride: Optional[timedelta] = None,
    min_count: int = DEFAULT_MIN_COUNT,
    allow_overlap: bool = False,
) -> TemporalStabilityResult:
    """Running Hellinger distance of ``series`` against a lagged or fixed reference.

    At each evaluation time ``t`` the values in ``[t - window, t)`` are
    compared with a reference window of the same length ending ``offset``
    earlier (sliding), or with ``[reference, reference + window)`` (fixed
    origin).

    The sliding offset is ``max(lag, window)``: a lag shorter than the
    window would make the two histograms share most of their samples and
    cap the distance well below 1 even across an abrupt change, so the
    reference is pushed back until it abuts the current window. Pass
    ``allow_overlap=True`` to use ``offset = lag`` literally (then
    ``lag=0`` compares a window with itself).

    Evaluation times start at the first ``t`` for which both windows lie
    inside the series and advance by ``stride`` (default: ``lag``, or one
    day when ``lag`` is zero) while the current window ends no later than
    one sampling interval past the last point.
    """
    if window <= timedelta(0):
        raise ValidationError("window must be positive")
    if lag < timedelta(0):
        raise ValidationError("lag must be non-negative")
    if stride is None:
        stride = lag if lag > timedelta(0) else timedelta(days=1)
    if stride <= timedelta(0):
        raise ValidationError("stride must be positive")
    if len(series) == 0:
        raise ValidationError("series is empty")

    times = np.array([_to_np(t) for t in series.times])
    values = series.values
    t_first, t_last = series.times[0], series.times[-1]
    gaps = np.diff(times)
    step = timedelta(microseconds=int(np.median(gaps).astype(np.int64))) if gaps.size else timedelta(0)
    t_end = t_last + step

    offset = lag if allow_overlap else max(lag, window)
    if reference is None:
        t = t_first + offset + window
        if t > t_end:
            raise ValidationError("series is shorter than the two compared windows")
    else:
        t = reference + window
        if t > t_end:
            raise ValidationError("series does not extend past reference + window")
        ref_vals = _window_values(times, values, _to_np(reference), _to_np(reference + window))

    out_t: List[datetime] = []
    out_d: List[float] = []
    skipped: List[datetime] = []
    while t <= t_end:
        cur = _window_values(times, values, _to_np(t - window), _to_np(t))
        if reference is None:
            ref = _window_values(times, values, _to_np(t - offset - window), _to_np(t - offset))
        else:
            ref = ref_vals
        if len(cur) < min_count or len(ref) < min_count:
            skipped.append(t)
            logger.debug("temporal_stability: skipped %s (%d/%d values)", t, len(cur), len(ref))
        else:
            out_t.append(t)
            out_d.append(hellinger(*build_histograms(ref, cur, spec)))
        t = t + stride
    return TemporalStabilityResult(
        tuple(out_t), tuple(out_d), window, lag, stride, reference, tuple(skipped), min_count,
        None if reference is not None else offset,
    )


def _pairwise(named: Mapping[str, np.ndarray], spec: BinningSpec, global_edges: bool) -> DistanceMatrix:
    labels = list(named)
    n = len(labels)
    vals = np.zeros((n, n))
    if global_edges:
        edges = spec.bin_edges(*named.values())
        hists = [histogram_on(named[lab], edges) for lab in labels]
    for i in range(n):
        for j in range(i + 1, n):
            if global_edges:
                d = hellinger(hists[i], hists[j])
            else:
                d = hellinger(*build_histograms(named[labels[i]], named[labels[j]], spec))
            vals[i, j] = vals[j, i] = d
    return DistanceMatrix(tuple(labels), vals)


def _collect(series_by_key: Mapping, what: str) -> Dict[str, np.ndarray]:
    named: Dict[str, np.ndarray] = {}
    for key, s in series_by_key.items():
        label = key if isinstance(key, str) else location_label(key)
        if label in named:
            raise ValidationError(f"duplicate {what} label {label!r}")
        vals = s.values if isinstance(s, MetricSeries) else np.asarray(s, dtype=float).ravel()
        if vals.size == 0:
            warnings.warn(f"{what} {label!r} has an empty series; excluded", stacklevel=3)
            continue
        named[label] = vals
    if len(named) < 2:
        raise ValidationError(f"need at least two non-empty {what} series, got {len(named)}")
    return named


def spatial_stability(
    series_by_location: Mapping,
    spec: BinningSpec = DEFAULT_BINNING,
    global_edges: bool = False,
) -> DistanceMatrix:
    """Pairwise Hellinger distances between full-history distributions at each location.

    Bin edges are shared per compared pair unless ``global_edges`` is set,
    in which case one set of edges spans every series (comparable heatmap
    cells). Output rows follow the order of ``series_by_location``.
    """
    return _pairwise(_collect(series_by_location, "location"), spec, global_edges)


def interdevice_stability(
    series_by_device: Mapping[str, MetricSeries],
    spec: BinningSpec = DEFAULT_BINNING,
    global_edges: bool = False,
) -> DistanceMatrix:
    """Pairwise Hellinger distances between devices' full-history distributions."""
    return _pairwise(_collect(series_by_device, "device"), spec, global_edges)
