"""Windowed statistical functionals, CFS feature selection and fluency features."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .corpus import Recording
from .dsp import FrameSeries, VadSegmentation

WINDOW_S = 3.0
STRIDE_S = 2.0  # 3 s windows overlapping by 1 s
STATS = ("mean", "std", "skewness", "kurtosis", "min", "max", "range", "slope", "regerr")

# Per-frame descriptors summarised by the functionals.
FUNCTIONAL_LLDS = (
    ["loudness"]
    + [f"mfcc_{k}" for k in range(13)]
    + [f"mfcc_d_{k}" for k in range(13)]
    + [
        "band_energy_250_650",
        "band_energy_1k_4k",
        "spectral_rolloff25",
        "spectral_flux",
        "spectral_entropy",
        "spectral_skewness",
        "sharpness",
        "harmonicity",
        "flatness",
        "f0",
        "voicing_prob",
        "jitter_local",
    ]
)


def window_count(duration: float, win: float = WINDOW_S, stride: float = STRIDE_S) -> int:
    """Number of complete windows: floor((T - win) / stride) + 1, or 0 when T < win."""
    if duration + 1e-9 < win:
        return 0
    return int(math.floor((duration - win) / stride + 1e-9)) + 1


def window_spans(duration: float, win: float = WINDOW_S, stride: float = STRIDE_S):
    """(start, end) of each window; one truncated span covering everything when T < win."""
    n = window_count(duration, win, stride)
    if n == 0:
        return [(0.0, duration)], True
    return [(k * stride, k * stride + win) for k in range(n)], False


def frames_in_span(n_frames: int, frame_len: float, hop: float, start: float, end: float) -> np.ndarray:
    """Indices of frames lying entirely inside [start, end]."""
    starts = np.arange(n_frames) * hop
    sel = (starts >= start - 1e-9) & (starts + frame_len <= end + 1e-9)
    return np.nonzero(sel)[0]


def functionals_of(track: np.ndarray) -> np.ndarray:
    """The nine statistics of one descriptor track, in ``STATS`` order."""
    x = np.asarray(track, dtype=float)
    n = x.size
    mean = x.mean()
    dev = x - mean
    var = np.mean(dev * dev)
    std = math.sqrt(var)
    if std > 1e-12 * max(1.0, abs(mean)):
        skew = np.mean(dev ** 3) / std ** 3
        kurt = np.mean(dev ** 4) / var ** 2 - 3.0
    else:
        skew = kurt = 0.0
    lo, hi = x.min(), x.max()
    if n > 1:
        t = np.arange(n, dtype=float)
        tc = t - t.mean()
        slope = float(tc @ dev / (tc @ tc))
        resid = dev - slope * tc
        regerr = math.sqrt(float(np.mean(resid * resid)))
    else:
        slope = regerr = 0.0
    return np.array([mean, std, skew, kurt, lo, hi, hi - lo, slope, regerr])


@dataclass(frozen=True, eq=False)
class FunctionalSet:
    names: tuple
    vectors: np.ndarray  # (n_windows, n_functionals)
    spans: tuple
    truncated: bool = False

    def write_csv(self, path) -> None:
        with open(Path(path), "w") as fh:
            fh.write(",".join(["start", "end", *self.names]) + "\n")
            for (a, b), row in zip(self.spans, self.vectors):
                fh.write(",".join([repr(a), repr(b), *[repr(float(v)) for v in row]]) + "\n")


def functional_names(llds=FUNCTIONAL_LLDS) -> tuple:
    return tuple(f"{lld}__{stat}" for lld in llds for stat in STATS)


def compute_functionals(frames: FrameSeries, llds=FUNCTIONAL_LLDS, win: float = WINDOW_S,
                        stride: float = STRIDE_S) -> FunctionalSet:
    """Functionals of every descriptor over sliding windows.

    A recording shorter than one window yields a single window over the
    whole recording with ``truncated`` set.
    """
    cols = frames.columns()
    spans, truncated = window_spans(frames.duration, win, stride)
    cfg = frames.config
    rows = []
    kept = []
    for a, b in spans:
        idx = frames_in_span(frames.n_frames, cfg.frame_len, cfg.hop, a, b)
        if idx.size == 0:
            idx = np.arange(frames.n_frames)
        rows.append(np.concatenate([functionals_of(cols[name][idx]) for name in llds]))
        kept.append((a, b))
    return FunctionalSet(functional_names(llds), np.vstack(rows), tuple(kept), truncated)


# ---------------------------------------------------------------- CFS


@dataclass(frozen=True)
class CfsSelection:
    selected_indices: tuple
    merit: float

    def to_json(self) -> str:
        return json.dumps({"selected_indices": list(self.selected_indices), "merit": self.merit})

    @classmethod
    def from_json(cls, text: str) -> "CfsSelection":
        doc = json.loads(text)
        return cls(tuple(doc["selected_indices"]), float(doc["merit"]))


def abs_correlations(matrix, labels):
    """|Pearson| feature-class and feature-feature correlations; constant columns give 0."""
    X = np.asarray(matrix, dtype=float)
    y = np.asarray(labels, dtype=float)
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt(np.sum(Xc * Xc, axis=0))
    sy = math.sqrt(float(yc @ yc))
    ok = sx > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    Z = np.where(ok, Xc / np.where(ok, sx, 1.0), 0.0)
    r_cf = np.abs(Z.T @ yc) / sy if sy > 0 else np.zeros(X.shape[1])
    r_ff = np.abs(Z.T @ Z)
    r_cf = np.where(ok, np.clip(r_cf, 0.0, 1.0), 0.0)
    return r_cf, np.clip(r_ff, 0.0, 1.0)


def cfs_merit(subset, r_cf, r_ff) -> float:
    """k * mean(r_cf) / sqrt(k + k(k-1) * mean(r_ff)) for a feature subset."""
    idx = list(subset)
    k = len(idx)
    if k == 0:
        return 0.0
    s_cf = float(np.sum(r_cf[idx]))
    sub = r_ff[np.ix_(idx, idx)]
    s_ff = (float(sub.sum()) - float(np.trace(sub))) / 2.0
    return _merit(k, s_cf, s_ff)


def _merit(k, s_cf, s_ff):
    # k * (s_cf / k) / sqrt(k + k(k-1) * s_ff / (k(k-1)/2))
    denom = k + 2.0 * s_ff
    return s_cf / math.sqrt(denom) if denom > 0 else 0.0


def cfs_select(matrix, labels, k_max: int = 57, max_stale: int = 5) -> CfsSelection:
    """Best-first forward search over feature subsets maximizing the CFS merit.

    The search stops after ``max_stale`` consecutive expansions that fail to
    improve on the best subset seen, or when no subset below ``k_max``
    features remains to expand. Ties are broken towards lower feature
    indices, so the result is deterministic.
    """
    r_cf, r_ff = abs_correlations(matrix, labels)
    n = r_cf.size
    best_set: tuple = ()
    best_merit = 0.0
    # heap entries: (-merit, subset, s_cf, s_ff)
    heap = [(-0.0, (), 0.0, 0.0)]
    visited = {()}
    stale = 0
    while heap and stale < max_stale:
        _, subset, s_cf, s_ff = heapq.heappop(heap)
        if len(subset) >= k_max:
            continue
        improved = False
        members = list(subset)
        add_ff = r_ff[:, members].sum(axis=1) if members else np.zeros(n)
        for j in range(n):
            if j in subset:
                continue
            cand = tuple(sorted(subset + (j,)))
            if cand in visited:
                continue
            visited.add(cand)
            c_cf = s_cf + r_cf[j]
            c_ff = s_ff + add_ff[j]
            m = _merit(len(cand), c_cf, c_ff)
            heapq.heappush(heap, (-m, cand, c_cf, c_ff))
            if m > best_merit + 1e-12:
                best_merit = m
                best_set = cand
                improved = True
        stale = 0 if improved else stale + 1
    return CfsSelection(best_set, float(best_merit))


# ---------------------------------------------------------------- fluency


FLUENCY_NAMES = (
    "n_syllables",
    "rate_of_speech",
    "speaking_duration",
    "f0_mean",
    "f0_median",
    "f0_min",
    "pron_posterior",
    "mean_voiced_interval",
    "mean_pair_duration",
    "mean_energy",
    "energy_mean_to_std_ratio",
)


@dataclass(frozen=True)
class FluencyVector:
    n_syllables: int
    rate_of_speech: float
    speaking_duration: float
    f0_mean: float
    f0_median: float
    f0_min: float
    pron_posterior: float
    mean_voiced_interval: float
    mean_pair_duration: float
    mean_energy: float
    energy_mean_to_std_ratio: float
    no_speech: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([float(getattr(self, name)) for name in FLUENCY_NAMES])


@dataclass(frozen=True)
class FluencyConfig:
    min_prominence_db: float = 2.0
    min_distance_s: float = 0.1
    energy_eps: float = 1e-8


def count_syllables(energy_db: np.ndarray, voiced: np.ndarray, hop: float, floor_db: float,
                    config: FluencyConfig = FluencyConfig()) -> int:
    """Energy peaks inside voiced frames with enough prominence and spacing."""
    dist = max(1, int(round(config.min_distance_s / hop)))
    peaks, _ = find_peaks(energy_db, prominence=config.min_prominence_db, distance=dist)
    peaks = [p for p in peaks if voiced[p] and energy_db[p] > floor_db]
    return len(peaks)


def compute_fluency(recording: Recording, frames: FrameSeries, vad: VadSegmentation,
                    config: FluencyConfig = FluencyConfig()) -> FluencyVector:
    """The 11 rhythm and prosody parameters of one recording.

    ``pron_posterior`` is the mean voicing probability over VAD-voiced
    frames; it stands in for a recognizer's pronunciation posterior.
    """
    duration = recording.duration
    voiced_frames = np.asarray(vad.frame_voiced, dtype=bool)
    segs = list(vad.segments)
    speaking = vad.speaking_duration
    if speaking <= 0 or not voiced_frames.any():
        return FluencyVector(0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, no_speech=True)

    energy_db = frames["energy_db"]
    n_syl = count_syllables(energy_db, voiced_frames, frames.config.hop, vad.threshold_db, config)

    f0 = frames["f0"][voiced_frames]
    f0 = f0[f0 > 0]
    if f0.size:
        f0_mean, f0_median, f0_min = float(f0.mean()), float(np.median(f0)), float(f0.min())
    else:
        f0_mean = f0_median = f0_min = 0.0
    pron = float(frames["voicing_prob"][voiced_frames].mean())

    voiced_lengths = [e - s for s, e, v in segs if v]
    pairs = [(segs[i][1] - segs[i][0]) + (segs[i + 1][1] - segs[i + 1][0])
             for i in range(len(segs) - 1) if segs[i][2] and not segs[i + 1][2]]

    lin = 10.0 ** (energy_db[voiced_frames] / 10.0)
    e_mean = float(lin.mean())
    e_std = float(lin.std())
    return FluencyVector(
        n_syllables=int(n_syl),
        rate_of_speech=n_syl / duration,
        speaking_duration=float(speaking),
        f0_mean=f0_mean,
        f0_median=f0_median,
        f0_min=f0_min,
        pron_posterior=pron,
        mean_voiced_interval=float(np.mean(voiced_lengths)),
        mean_pair_duration=float(np.mean(pairs)) if pairs else 0.0,
        mean_energy=e_mean,
        energy_mean_to_std_ratio=e_mean / max(e_std, config.energy_eps),
    )
