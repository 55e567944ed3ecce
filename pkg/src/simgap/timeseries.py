"""Timestamped sample containers and the alignment plumbing used by the metrics."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite_array, check_strictly_increasing

DEFAULT_WARMUP = 2.0


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Samples of a D-dimensional signal at strictly increasing timestamps.

    ``values`` is always stored as an ``(N, D)`` array; scalar signals have
    ``D == 1`` and can be read back flat through :attr:`scalar`.
    """

    timestamps: np.ndarray
    values: np.ndarray
    unit: str = ""
    labels: tuple = field(default=())

    def __post_init__(self):
        t = check_finite_array(self.timestamps, "timestamps", ndim=1)
        check_strictly_increasing(t)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError(f"values must be (N, D) with D >= 1, got shape {v.shape}")
        if v.shape[0] != t.shape[0]:
            raise ValueError(f"len(timestamps)={t.shape[0]} != len(values)={v.shape[0]}")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.timestamps.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.unit == other.unit
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def scalar(self):
        if self.dim != 1:
            raise ValueError(f"series is {self.dim}-dimensional, not scalar")
        return self.values[:, 0]

    def window(self, start=-np.inf, stop=np.inf):
        """Samples with ``start <= t <= stop``."""
        m = (self.timestamps >= start) & (self.timestamps <= stop)
        return TimeSeries(self.timestamps[m], self.values[m], self.unit, self.labels)


@dataclass(frozen=True, eq=False)
class AlignedPair:
    """A scalar estimate and its ground truth sampled at identical timestamps."""

    estimate: TimeSeries
    ground_truth: TimeSeries

    def __post_init__(self):
        if not np.array_equal(self.estimate.timestamps, self.ground_truth.timestamps):
            raise ValueError("estimate and ground truth must share timestamps")
        if len(self.estimate) < 2:
            raise ValueError(f"aligned pair needs at least 2 samples, got {len(self.estimate)}")
        if self.estimate.dim != 1 or self.ground_truth.dim != 1:
            raise ValueError("aligned pair holds scalar series only")


def resample_linear(series, target_timestamps):
    """Linearly interpolate ``series`` onto ``target_timestamps``.

    Targets outside ``[series.t[0], series.t[-1]]`` are dropped, so the result
    can be shorter than the request.
    """
    if len(series) < 2:
        raise ValueError("insufficient samples: need at least 2 to interpolate")
    tq = check_finite_array(target_timestamps, "target_timestamps", ndim=1)
    check_strictly_increasing(tq, "target_timestamps")
    t = series.timestamps
    tq = tq[(tq >= t[0]) & (tq <= t[-1])]

    idx = np.searchsorted(t, tq, side="left")
    exact = (idx < len(t)) & (t[np.minimum(idx, len(t) - 1)] == tq)
    # right-hand segment index, clamped so tq == t[-1] lands on the last segment
    hi = np.clip(np.searchsorted(t, tq, side="right"), 1, len(t) - 1)
    lo = hi - 1
    w = ((tq - t[lo]) / (t[hi] - t[lo]))[:, None]
    v = series.values
    out = v[lo] + w * (v[hi] - v[lo])
    out[exact] = v[idx[exact]]
    return TimeSeries(tq, out, series.unit, series.labels)


def speed_magnitude(vel):
    """Horizontal ground speed: norm of the first two velocity components."""
    if vel.dim < 2:
        raise ValueError(f"velocity series must have at least 2 components, got {vel.dim}")
    return TimeSeries(vel.timestamps, np.hypot(vel.values[:, 0], vel.values[:, 1]), "m/s")


def align(estimate, ground_truth, warmup=DEFAULT_WARMUP):
    """Put ground truth onto the estimator clock and drop the warm-up window.

    Only the overlap of both series is kept, and the first ``warmup`` seconds
    of that overlap are discarded.
    """
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    t0 = max(estimate.timestamps[0], ground_truth.timestamps[0])
    t1 = min(estimate.timestamps[-1], ground_truth.timestamps[-1])
    est = estimate.window(t0 + warmup, t1)
    gt = resample_linear(ground_truth, est.timestamps)
    return AlignedPair(est, gt)
