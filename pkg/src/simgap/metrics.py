"""Velocity-error signatures and the VEPD population comparison.

Per run, a judge estimate is summarised by two numbers: the RMSE against
ground truth and the absolute difference of the two signals' Wiener
entropies (spectral flatness). Two populations of such pairs are compared
with 1-D Wasserstein distances, one per coordinate, and VEPD is their mean.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .timeseries import DEFAULT_WARMUP, AlignedPair, TimeSeries, align, speed_magnitude

FLAT_BIN_EPS = 1e-12


@dataclass(frozen=True)
class RunScore:
    rmse: float
    entropy_diff: float

    def __post_init__(self):
        if not (math.isfinite(self.rmse) and self.rmse >= 0):
            raise ValueError(f"rmse must be finite and >= 0, got {self.rmse}")
        if not (math.isfinite(self.entropy_diff) and 0.0 <= self.entropy_diff <= 1.0):
            raise ValueError(f"entropy_diff must lie in [0, 1], got {self.entropy_diff}")


@dataclass(frozen=True)
class RunPopulation:
    scores: tuple
    label: str = ""

    def __post_init__(self):
        scores = tuple(s if isinstance(s, RunScore) else RunScore(*s) for s in self.scores)
        if not scores:
            raise ValueError("a population needs at least one run")
        object.__setattr__(self, "scores", scores)

    def __len__(self):
        return len(self.scores)

    @property
    def rmse(self):
        return np.array([s.rmse for s in self.scores])

    @property
    def entropy_diff(self):
        return np.array([s.entropy_diff for s in self.scores])

    @classmethod
    def from_array(cls, arr, label=""):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"expected (K, 2) array of (rmse, entropy_diff), got {arr.shape}")
        return cls(tuple(RunScore(float(a), float(b)) for a, b in arr), label)


@dataclass(frozen=True)
class VepdReport:
    w1: float
    w2: float
    vepd: float
    k: int = 0
    per_scenario: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"w1": self.w1, "w2": self.w2, "vepd": self.vepd, "k": self.k}
        if self.per_scenario:
            d["per_scenario"] = {name: r.to_dict() for name, r in self.per_scenario.items()}
        return d


def _values(x):
    if isinstance(x, TimeSeries):
        return x.scalar
    return np.asarray(x, dtype=float)


def rmse(pair):
    """Root-mean-square difference between estimate and ground truth."""
    if isinstance(pair, AlignedPair):
        e, g = pair.estimate.scalar, pair.ground_truth.scalar
    else:
        e, g = (np.asarray(v, dtype=float) for v in pair)
    if e.shape != g.shape:
        raise ValueError(f"length mismatch: {e.shape} vs {g.shape}")
    if e.size < 1:
        raise ValueError("rmse of an empty signal")
    return float(np.sqrt(np.mean((e - g) ** 2)))


def spectral_magnitudes(v, remove_mean=False):
    """|DFT| bins entering the flatness ratio.

    With ``remove_mean`` the DC bin (zero after demeaning) is excluded;
    otherwise every bin, DC included, is returned.
    """
    x = _values(v)
    if x.ndim != 1 or x.size < 2:
        raise ValueError(f"need a 1-D signal with at least 2 samples, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    if not np.any(x):
        raise ValueError("degenerate spectrum: all-zero signal")
    if remove_mean:
        return np.abs(np.fft.fft(x - x.mean()))[1:]
    return np.abs(np.fft.fft(x))


def flatness(mag, reference_max=None):
    """Geometric over arithmetic mean of magnitudes; any near-zero bin gives 0.

    ``reference_max`` sets the scale for the near-zero threshold (defaults to
    ``mag.max()``).
    """
    top = mag.max() if reference_max is None else reference_max
    if mag.size == 0 or top <= 0 or mag.min() < FLAT_BIN_EPS * top:
        return 0.0
    arith = mag.mean()
    geo = math.exp(np.mean(np.log(mag)))
    return min(1.0, geo / arith)


def wiener_entropy(v, remove_mean=False):
    """Spectral flatness of a scalar signal, in [0, 1].

    By default every DFT bin of the raw signal enters the ratio, DC
    included. ``remove_mean=True`` demeans first and drops the DC bin. In
    both modes a non-zero constant is a pure DC tone and scores 0.
    """
    x = _values(v)
    mag = spectral_magnitudes(x, remove_mean)
    # threshold relative to the raw signal's energy so a constant demeans to "tonal"
    scale = max(mag.max(), np.abs(x).max() * x.size) if remove_mean else None
    return flatness(mag, scale)


def entropy_diff(estimate, ground_truth, remove_mean=False):
    return abs(wiener_entropy(estimate, remove_mean) - wiener_entropy(ground_truth, remove_mean))


def wasserstein_1d(a, b):
    """Exact W1 between two equal-size, equal-weight 1-D point sets."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("Wasserstein distance of an empty set")
    if a.size != b.size:
        raise ValueError(f"point sets must have equal size, got {a.size} and {b.size}")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def vepd(real, sim):
    """Compare two run populations; VEPD = (W_rmse + W_entropy) / 2."""
    if len(real) != len(sim):
        raise ValueError(f"populations must have equal K, got {len(real)} and {len(sim)}")
    w1 = wasserstein_1d(real.rmse, sim.rmse)
    w2 = wasserstein_1d(real.entropy_diff, sim.entropy_diff)
    return VepdReport(w1, w2, (w1 + w2) / 2.0, len(real))


def score_run(estimate, ground_truth, warmup=DEFAULT_WARMUP, remove_mean=False):
    """RunScore of one judge output against ground-truth speed.

    Either argument may be a 2-D velocity series; it is reduced to horizontal
    speed first. Ground truth is resampled onto the estimate clock.
    """
    if estimate.dim > 1:
        estimate = speed_magnitude(estimate)
    if ground_truth.dim > 1:
        ground_truth = speed_magnitude(ground_truth)
    pair = align(estimate, ground_truth, warmup)
    return RunScore(rmse(pair), entropy_diff(pair.estimate, pair.ground_truth, remove_mean))


class SignatureExtractor(TransformerMixin, BaseEstimator):
    """Map (estimate, ground_truth) series pairs to ``(K, 2)`` rows of (rmse, entropy_diff)."""

    def __init__(self, warmup=DEFAULT_WARMUP, remove_mean=False):
        self.warmup = warmup
        self.remove_mean = remove_mean

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        rows = []
        for est, gt in X:
            s = score_run(est, gt, self.warmup, self.remove_mean)
            rows.append((s.rmse, s.entropy_diff))
        return np.array(rows, dtype=float).reshape(-1, 2)


class VepdScorer(BaseEstimator):
    """Fit on a reference ("real") population, then report VEPD for others.

    Accepts :class:`RunPopulation` objects or ``(K, 2)`` arrays.
    """

    def fit(self, X, y=None):
        ref = X if isinstance(X, RunPopulation) else RunPopulation.from_array(X, "reference")
        self.reference_ = ref
        self.n_runs_ = len(ref)
        return self

    def report(self, X):
        check_is_fitted(self, "reference_")
        pop = X if isinstance(X, RunPopulation) else RunPopulation.from_array(X)
        return vepd(self.reference_, pop)

    def score(self, X, y=None):
        """Negative VEPD, so larger is better as scikit-learn expects."""
        return -self.report(X).vepd
