import itertools
import math

import numpy as np
import pytest
import scipy.fft
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from simgap.metrics import (
    RunPopulation,
    RunScore,
    SignatureExtractor,
    VepdScorer,
    entropy_diff,
    rmse,
    score_run,
    vepd,
    wasserstein_1d,
    wiener_entropy,
)
from simgap.timeseries import TimeSeries


def brute_force_w1(a, b):
    k = len(a)
    return min(sum(abs(a[i] - b[p[i]]) for i in range(k)) / k for p in itertools.permutations(range(k)))


# -- rmse ---------------------------------------------------------------


def test_rmse_examples():
    assert rmse(([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])) == 0.0
    assert rmse(([1.5, 2.5], [1.0, 2.0])) == pytest.approx(0.5)
    assert rmse(([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])) == pytest.approx(math.sqrt(5 / 3), abs=1e-12)


def test_rmse_errors():
    with pytest.raises(ValueError, match="mismatch"):
        rmse(([1.0, 2.0], [1.0]))
    with pytest.raises(ValueError):
        rmse(([], []))


@settings(max_examples=100, deadline=None)
@given(
    a=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30),
    c=st.floats(-100, 100),
    seed=st.integers(0, 2**32 - 1),
)
def test_rmse_properties(a, c, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).normal(size=a.size) * 10
    assert rmse((a, b)) == rmse((b, a))
    assert rmse((a, a)) == 0.0
    assert rmse((c * a, c * b)) == pytest.approx(abs(c) * rmse((a, b)), rel=1e-9, abs=1e-9)


# -- Wiener entropy ---------------------------------------------------


@pytest.mark.parametrize("n", [2, 7, 64, 1000])
@pytest.mark.parametrize("remove_mean", [False, True])
def test_impulse_is_perfectly_flat(n, remove_mean):
    x = np.zeros(n)
    x[0] = 1.0
    if remove_mean:
        # a demeaned impulse has a zero DC bin, which is dropped: remaining bins are all 1
        assert wiener_entropy(x, remove_mean=True) == pytest.approx(1.0, abs=1e-12)
    else:
        assert wiener_entropy(x) == 1.0


@pytest.mark.parametrize("remove_mean", [False, True])
@pytest.mark.parametrize("k", [1, 5, 17])
def test_integer_bin_sinusoid_is_tonal(k, remove_mean):
    n = 256
    x = np.sin(2 * np.pi * k * np.arange(n) / n)
    assert wiener_entropy(x, remove_mean) == 0.0


@pytest.mark.parametrize("remove_mean", [False, True])
def test_constant_signal_is_tonal(remove_mean):
    assert wiener_entropy(np.full(50, 1.7), remove_mean) == 0.0


def test_all_zero_signal_is_degenerate():
    with pytest.raises(ValueError, match="degenerate spectrum"):
        wiener_entropy(np.zeros(16))


def test_entropy_needs_two_samples():
    with pytest.raises(ValueError):
        wiener_entropy([1.0])


def _oracle_flatness(x):
    mag = np.abs(scipy.fft.fft(x))
    return scipy.stats.gmean(mag) / mag.mean()


def test_white_noise_matches_monte_carlo_flatness():
    n, reps = 4096, 1000
    rng = np.random.default_rng(2024)
    oracle = np.mean([_oracle_flatness(rng.normal(size=n)) for _ in range(reps)])
    # large-N limit for Rayleigh magnitudes: 2 exp(-gamma/2) / sqrt(pi)
    assert oracle == pytest.approx(2 * math.exp(-np.euler_gamma / 2) / math.sqrt(math.pi), rel=0.01)
    rng = np.random.default_rng(7)
    for remove_mean in (False, True):
        ours = np.mean([wiener_entropy(rng.normal(size=n), remove_mean) for _ in range(200)])
        assert ours == pytest.approx(oracle, rel=0.02)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 300), c=st.floats(1e-3, 1e3), neg=st.booleans())
def test_entropy_range_and_scale_invariance(seed, n, c, neg):
    x = np.random.default_rng(seed).normal(size=n)
    s = wiener_entropy(x)
    assert 0.0 <= s <= 1.0
    assert wiener_entropy((-c if neg else c) * x) == pytest.approx(s, abs=1e-9)


def test_entropy_diff_properties():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=100), rng.normal(size=100) + 2
    assert entropy_diff(a, a) == 0.0
    assert entropy_diff(a, b) == entropy_diff(b, a)
    assert entropy_diff(a, b) == pytest.approx(abs(wiener_entropy(a) - wiener_entropy(b)))


# -- Wasserstein --------------------------------------------------------


@pytest.mark.parametrize(
    "a, b, expected",
    [([0.0], [1.0], 1.0), ([0.0, 1.0], [1.0, 2.0], 1.0), ([0.0, 4.0], [1.0, 2.0], 1.5), ([3.0, 1.0, 2.0], [1.0, 2.0, 3.0], 0.0)],
)
def test_wasserstein_examples(a, b, expected):
    assert wasserstein_1d(a, b) == pytest.approx(expected, abs=1e-15)
    assert brute_force_w1(a, b) == pytest.approx(expected, abs=1e-15)


def test_wasserstein_errors():
    with pytest.raises(ValueError, match="empty"):
        wasserstein_1d([], [])
    with pytest.raises(ValueError, match="equal size"):
        wasserstein_1d([1.0, 2.0], [1.0])


def test_wasserstein_matches_brute_force_random_sets():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        a, b = rng.normal(size=k) * rng.uniform(0.01, 10), rng.normal(size=k) + rng.uniform(-3, 3)
        assert abs(wasserstein_1d(a, b) - brute_force_w1(a, b)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(data=st.data(), k=st.integers(1, 6))
def test_wasserstein_metric_axioms(data, k):
    pts = st.lists(st.floats(-1e3, 1e3), min_size=k, max_size=k)
    a, b, c = data.draw(pts), data.draw(pts), data.draw(pts)
    ab = wasserstein_1d(a, b)
    assert ab >= 0
    assert ab == wasserstein_1d(b, a)
    assert wasserstein_1d(a, list(reversed(a))) == 0.0
    assert ab <= wasserstein_1d(a, c) + wasserstein_1d(c, b) + 1e-9
    assert ab == pytest.approx(brute_force_w1(a, b), abs=1e-9)


def test_wasserstein_agrees_with_scipy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.exponential(size=10), rng.exponential(size=10) * 2
        assert wasserstein_1d(a, b) == pytest.approx(scipy.stats.wasserstein_distance(a, b), abs=1e-12)


# -- VEPD ---------------------------------------------------------------

# published (W1, W2, VEPD) rows; the check is the composition, within print rounding
PRINTED_ROWS = {
    "Ch:Gauss": (0.2242, 0.0859, 0.155),
    "Ch:RW": (0.0836, 0.0025, 0.043),
    "AirSim": (0.0725, 0.0054, 0.039),
    "Ch:Gauss+AirSim": (0.1069, 0.0185, 0.0627),
    "Ch:RW+AirSim": (0.092, 0.0044, 0.0482),
}


@pytest.mark.parametrize("name", PRINTED_ROWS)
def test_vepd_composition_matches_printed_rows(name):
    w1, w2, printed = PRINTED_ROWS[name]
    real = RunPopulation(((w1, 0.0),))
    sim = RunPopulation(((0.0, w2),))
    rep = vepd(real, sim)
    assert rep.w1 == pytest.approx(w1) and rep.w2 == pytest.approx(w2)
    assert abs(rep.vepd - printed) <= 0.001


def test_vepd_from_brute_force_example():
    real = RunPopulation(((0.0, 0.5), (4.0, 0.5)))
    sim = RunPopulation(((1.0, 0.5), (2.0, 0.5)))
    rep = vepd(real, sim)
    assert (rep.w1, rep.w2, rep.vepd) == (1.5, 0.0, 0.75)
    assert rep.vepd == (rep.w1 + rep.w2) / 2


def test_vepd_identity_symmetry_and_equal_k():
    rng = np.random.default_rng(3)
    p = RunPopulation.from_array(np.column_stack([rng.uniform(0, 1, 10), rng.uniform(0, 1, 10)]))
    q = RunPopulation.from_array(np.column_stack([rng.uniform(0, 1, 10), rng.uniform(0, 1, 10)]))
    assert vepd(p, p).vepd == 0.0
    assert vepd(p, q).vepd == vepd(q, p).vepd
    with pytest.raises(ValueError, match="equal K"):
        vepd(p, RunPopulation(p.scores[:5]))


@pytest.mark.parametrize("bad", [(-0.1, 0.2), (0.1, 1.2), (math.nan, 0.1)])
def test_run_score_invariants(bad):
    with pytest.raises(ValueError):
        RunScore(*bad)


def test_empty_population_rejected():
    with pytest.raises(ValueError):
        RunPopulation(())


# -- per-run scoring and sklearn wrappers ---------------------------------


def _pair(seed, noise=0.05):
    rng = np.random.default_rng(seed)
    t = np.arange(0, 700) / 35.0
    gt = TimeSeries(np.arange(0, 20.001, 0.01), np.full(2001, 1.5))
    est = TimeSeries(t, 1.5 + noise * rng.normal(size=t.size))
    return est, gt


def test_score_run_skips_warmup_and_reduces_vectors():
    est, gt = _pair(0)
    s = score_run(est, gt)
    assert s.rmse == pytest.approx(0.05, rel=0.1)
    vec = TimeSeries(est.timestamps, np.column_stack([est.scalar, np.zeros(len(est))]))
    assert score_run(vec, gt) == s


def test_signature_extractor_and_scorer():
    pairs = [_pair(i) for i in range(10)]
    X = SignatureExtractor().fit_transform(pairs)
    assert X.shape == (10, 2)
    sc = VepdScorer().fit(X)
    assert sc.score(X) == 0.0
    Y = SignatureExtractor().transform([_pair(100 + i, noise=0.2) for i in range(10)])
    rep = sc.report(Y)
    assert rep.w1 > 0.1
    assert sc.score(Y) == -rep.vepd
    assert clone(SignatureExtractor(warmup=1.0)).get_params() == {"warmup": 1.0, "remove_mean": False}
