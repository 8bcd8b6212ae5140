import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from cadence import dsp
from cadence.acoustic_features import (FLUENCY_NAMES, FUNCTIONAL_LLDS, STATS, CfsSelection, abs_correlations,
                                       cfs_merit, cfs_select, compute_fluency, compute_functionals,
                                       functionals_of, window_count, window_spans)
from cadence.corpus import Recording
from conftest import tone

SR = 16000


def test_window_arithmetic():
    assert window_count(10.0) == 4
    spans, truncated = window_spans(10.0)
    assert [a for a, _ in spans] == [0.0, 2.0, 4.0, 6.0] and not truncated
    assert window_count(3.0) == 1
    assert window_count(2.9) == 0
    spans, truncated = window_spans(2.0)
    assert spans == [(0.0, 2.0)] and truncated


@pytest.mark.parametrize("T", [3.0, 4.99, 5.0, 7.5, 11.0, 60.0])
def test_window_count_rule(T):
    assert window_count(T) == math.floor((T - 3) / 2) + 1


def test_functionals_constant_track():
    f = dict(zip(STATS, functionals_of(np.full(50, 2.5))))
    assert f["std"] == 0 and f["slope"] == 0
    assert f["min"] == f["max"] == f["mean"] == 2.5
    assert f["range"] == 0 and f["regerr"] == 0


def test_functionals_line():
    f = dict(zip(STATS, functionals_of(np.arange(30.0))))
    assert f["slope"] == pytest.approx(1.0, abs=1e-12)
    assert f["regerr"] == pytest.approx(0.0, abs=1e-10)


def test_functionals_against_scipy(rng):
    x = rng.gamma(2.0, size=300)
    f = dict(zip(STATS, functionals_of(x)))
    assert f["mean"] == pytest.approx(np.mean(x))
    assert f["std"] == pytest.approx(np.std(x))
    assert f["skewness"] == pytest.approx(scipy.stats.skew(x))
    assert f["kurtosis"] == pytest.approx(scipy.stats.kurtosis(x))
    lr = scipy.stats.linregress(np.arange(x.size), x)
    assert f["slope"] == pytest.approx(lr.slope)
    resid = x - (lr.intercept + lr.slope * np.arange(x.size))
    assert f["regerr"] == pytest.approx(np.sqrt(np.mean(resid ** 2)))


def test_compute_functionals_shapes():
    rec = Recording(np.random.default_rng(0).uniform(-0.3, 0.3, SR * 10), SR)
    fs = compute_functionals(dsp.analyze(rec))
    assert fs.vectors.shape == (4, len(FUNCTIONAL_LLDS) * len(STATS))
    assert len(set(fs.names)) == len(fs.names)
    assert not fs.truncated
    assert np.all(np.isfinite(fs.vectors))
    short = compute_functionals(dsp.analyze(Recording(rec.samples[: 2 * SR], SR)))
    assert short.truncated and short.vectors.shape[0] == 1


def _exhaustive_best(X, y):
    r_cf, r_ff = abs_correlations(X, y)
    best, best_m = (), 0.0
    for k in range(1, X.shape[1] + 1):
        for sub in itertools.combinations(range(X.shape[1]), k):
            m = cfs_merit(sub, r_cf, r_ff)
            if m > best_m + 1e-12:
                best, best_m = sub, m
    return best, best_m


def test_cfs_label_feature_matches_exhaustive(rng):
    y = rng.integers(0, 2, 120)
    X = rng.standard_normal((120, 6))
    X[:, 3] = y
    sel = cfs_select(X, y)
    best, best_m = _exhaustive_best(X, y)
    assert sel.selected_indices == (3,) == best
    assert sel.merit == pytest.approx(best_m)


@pytest.mark.parametrize("seed", range(5))
def test_cfs_matches_exhaustive_on_correlated_features(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 200)
    X = y[:, None] * rng.uniform(0.2, 1.0, 6) + rng.standard_normal((200, 6))
    sel = cfs_select(X, y)
    _, best_m = _exhaustive_best(X, y)
    assert sel.merit == pytest.approx(best_m, rel=1e-9)


def test_cfs_duplicate_label_feature(rng):
    y = rng.integers(0, 2, 100)
    X = np.column_stack([rng.standard_normal(100), y, y, rng.standard_normal(100)])
    sel = cfs_select(X, y)
    # k=1 merit is 1; adding the copy gives 2 / sqrt(2 + 2) = 1, not an improvement
    assert sel.selected_indices in ((1,), (2,))
    r_cf, r_ff = abs_correlations(X, y)
    assert cfs_merit((1, 2), r_cf, r_ff) == pytest.approx(1.0)


def test_cfs_constant_column(rng):
    y = rng.integers(0, 2, 50)
    X = np.column_stack([np.ones(50), y + 0.1 * rng.standard_normal(50)])
    r_cf, r_ff = abs_correlations(X, y)
    assert r_cf[0] == 0 and r_ff[0, 1] == 0
    assert cfs_select(X, y).selected_indices == (1,)


def test_cfs_noise_merit_bound():
    merits = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        merits.append(cfs_select(rng.standard_normal((200, 6)), rng.integers(0, 2, 200)).merit)
    assert max(merits) < 0.3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_cfs_merit_dominates_singletons(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 60)
    X = rng.standard_normal((60, 8)) + y[:, None] * rng.uniform(0, 1, 8)
    sel = cfs_select(X, y, k_max=5)
    r_cf, _ = abs_correlations(X, y)
    assert sel.merit >= r_cf.max() - 1e-12
    assert list(sel.selected_indices) == sorted(set(sel.selected_indices))
    assert len(sel.selected_indices) <= 5


def test_cfs_json_roundtrip():
    sel = CfsSelection((1, 4, 9), 0.4321)
    assert CfsSelection.from_json(sel.to_json()) == sel


def _fluency(rec):
    frames = dsp.analyze(rec)
    return compute_fluency(rec, frames, dsp.vad(rec, energy_db=frames["energy_db"]))


def test_fluency_three_bursts():
    burst = tone(200.0, 0.3).samples
    gap = np.zeros(int(0.4 * SR))
    x = np.concatenate([np.zeros(int(0.2 * SR)), burst, gap, burst, gap, burst, gap])
    fv = _fluency(Recording(x, SR))
    assert fv.n_syllables == 3
    assert fv.mean_pair_duration == pytest.approx(0.7, abs=0.05)
    # each voiced run is widened by up to one frame length at its edges
    assert fv.speaking_duration == pytest.approx(0.9, abs=3 * 0.025)
    assert fv.f0_mean == pytest.approx(200.0, abs=3.0)
    assert fv.rate_of_speech * (x.size / SR) == pytest.approx(fv.n_syllables, abs=0, rel=1e-15)


def test_fluency_constant_tone():
    fv = _fluency(tone(150.0, 2.0))
    assert fv.energy_mean_to_std_ratio > 100
    assert len(fv.as_array()) == len(FLUENCY_NAMES) == 11
    assert 0 <= fv.pron_posterior <= 1


def test_fluency_silence_flagged():
    fv = _fluency(Recording(np.zeros(SR), SR))
    assert fv.no_speech
    assert fv.n_syllables == 0 and fv.speaking_duration == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_fluency_invariants(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1e-3, int(SR * 2))
    for _ in range(4):
        a = rng.integers(0, x.size - 4000)
        x[a:a + 3000] += tone(rng.uniform(100, 250), 3000 / SR, amp=rng.uniform(0.05, 0.5)).samples
    rec = Recording(np.clip(x, -1, 1), SR)
    fv = _fluency(rec)
    assert fv.rate_of_speech * rec.duration == pytest.approx(fv.n_syllables)
    assert fv.speaking_duration <= rec.duration + 1e-12
    assert np.all(np.isfinite(fv.as_array()))
