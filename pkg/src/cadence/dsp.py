"""Frame-level signal analysis.

Every descriptor is computed on fixed frames (default 25 ms / 10 ms hop,
Hamming window). Formulas for descriptors without a single canonical
definition:

* loudness: (sum of mel filterbank powers) ** 0.3
* sharpness: Zwicker-weighted centroid of bark-band specific loudness
* harmonicity: 10*log10(r / (1 - r)) from the normalized autocorrelation
  peak r used by the pitch tracker
* spectral entropy: natural-log entropy of the L1-normalized magnitude
  spectrum
* flatness: geometric over arithmetic mean of the power spectrum (0 for an
  all-zero frame)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct, irfft, rfft

from .corpus import Recording
from .errors import SignalTooShortError

TINY = 1e-20
OCTAVE_GUARD = 0.9  # prefer the shortest lag whose peak is within 90% of the best


@dataclass(frozen=True)
class FrameConfig:
    frame_len: float = 0.025
    hop: float = 0.010
    window: str = "hamming"
    fft_size: int = 512
    n_mels: int = 26
    n_mfcc: int = 13
    plp_order: int = 12
    f0_min: float = 60.0
    f0_max: float = 400.0
    voicing_threshold: float = 0.5
    energy_floor_db: float = -100.0

    def __post_init__(self):
        if self.frame_len <= 0 or self.hop <= 0:
            raise ValueError("frame_len and hop must be positive")
        if self.hop > self.frame_len:
            raise ValueError("hop must not exceed frame_len")
        if self.window not in ("hamming", "hann"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError("need 0 < f0_min < f0_max")

    def frame_samples(self, sample_rate: int) -> tuple[int, int]:
        return int(round(self.frame_len * sample_rate)), int(round(self.hop * sample_rate))

    def check_rate(self, sample_rate: int) -> None:
        n_len, _ = self.frame_samples(sample_rate)
        if self.fft_size < n_len:
            raise ValueError(f"fft_size {self.fft_size} shorter than a {n_len}-sample frame")

    @classmethod
    def for_rate(cls, sample_rate: int, **kw) -> "FrameConfig":
        """Default config with ``fft_size`` raised to fit one frame at this rate."""
        cfg = cls(**kw)
        n_len, _ = cfg.frame_samples(sample_rate)
        size = cfg.fft_size
        while size < n_len:
            size *= 2
        return cls(**{**kw, "fft_size": size})


SCALAR_LLDS = (
    "energy_db",
    "loudness",
    "f0",
    "voicing_prob",
    "band_energy_250_650",
    "band_energy_1k_4k",
    "spectral_rolloff25",
    "spectral_flux",
    "spectral_entropy",
    "spectral_skewness",
    "sharpness",
    "harmonicity",
    "flatness",
    "jitter_local",
)


@dataclass(frozen=True, eq=False)
class FrameSeries:
    """Per-frame descriptors; all arrays share the leading frame axis."""

    config: FrameConfig
    sample_rate: int
    duration: float
    mfcc: np.ndarray
    mfcc_delta: np.ndarray
    mfcc_delta2: np.ndarray
    plp: np.ndarray
    scalars: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.mfcc.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.config.hop

    def __getitem__(self, name: str) -> np.ndarray:
        return self.scalars[name]

    def columns(self) -> dict[str, np.ndarray]:
        """Every descriptor as a named 1-d column, in a fixed order."""
        cols = {"energy_db": self.scalars["energy_db"], "loudness": self.scalars["loudness"]}
        for name, mat in (("mfcc", self.mfcc), ("mfcc_d", self.mfcc_delta),
                          ("mfcc_dd", self.mfcc_delta2), ("plp", self.plp)):
            for k in range(mat.shape[1]):
                cols[f"{name}_{k}"] = mat[:, k]
        for name in SCALAR_LLDS[2:]:
            cols[name] = self.scalars[name]
        return cols

    def dump_csv(self, path) -> None:
        cols = self.columns()
        names = list(cols)
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + names)
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(cols[n][i])) for n in names])


@dataclass(frozen=True)
class VadSegmentation:
    segments: tuple  # (start_s, end_s, voiced)
    frame_voiced: np.ndarray = field(compare=False, repr=False)
    threshold_db: float = 0.0

    @property
    def voiced_segments(self):
        return [s for s in self.segments if s[2]]

    @property
    def speaking_duration(self) -> float:
        return float(sum(e - s for s, e, v in self.segments if v))

    @property
    def duration(self) -> float:
        return self.segments[-1][1] if self.segments else 0.0

    @property
    def pause_fraction(self) -> float:
        d = self.duration
        return 0.0 if d <= 0 else 1.0 - self.speaking_duration / d


# ---------------------------------------------------------------- framing


def _window(kind: str, n: int) -> np.ndarray:
    return np.hamming(n) if kind == "hamming" else np.hanning(n)


def frame_signal(x: np.ndarray, n_len: int, n_hop: int) -> np.ndarray:
    if len(x) < n_len:
        raise SignalTooShortError(f"signal of {len(x)} samples is shorter than one {n_len}-sample frame")
    return sliding_window_view(x, n_len)[::n_hop]


def _centered_frames(x: np.ndarray, n_frames: int, n_len: int, n_hop: int, width: int) -> np.ndarray:
    """Frames of ``width`` samples centered on the analysis frame centers, zero padded."""
    pad = width
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    starts = np.arange(n_frames) * n_hop + n_len // 2 - width // 2 + pad
    idx = starts[:, None] + np.arange(width)[None, :]
    return xp[idx]


def frame_energy_db(recording: Recording, config: FrameConfig) -> np.ndarray:
    n_len, n_hop = config.frame_samples(recording.sample_rate)
    frames = frame_signal(recording.samples, n_len, n_hop)
    ms = np.mean(frames * frames, axis=1)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(ms)
    return np.maximum(db, config.energy_floor_db)


# ---------------------------------------------------------------- filterbanks


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int, fmin=0.0, fmax=None) -> np.ndarray:
    """Triangular mel filters, shape (n_filters, n_fft // 2 + 1)."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    fb = np.zeros((n_filters, freqs.size))
    for k in range(n_filters):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
    return fb


def hz_to_bark(f):
    return 6.0 * np.arcsinh(np.asarray(f) / 600.0)


def bark_filterbank(n_fft: int, sample_rate: int):
    """Critical-band weights on a 1-bark grid; returns (weights, center_barks)."""
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    nyq_bark = float(hz_to_bark(sample_rate / 2.0))
    n_bands = int(math.ceil(nyq_bark)) + 1
    centers = np.linspace(0.0, nyq_bark, n_bands)
    bins = hz_to_bark(freqs)
    wts = np.zeros((n_bands, freqs.size))
    for k, zc in enumerate(centers):
        lof = bins - zc - 0.5
        hif = bins - zc + 0.5
        wts[k] = 10.0 ** np.minimum(0.0, np.minimum(hif, -2.5 * lof))
    return wts, centers


def equal_loudness(freqs_hz):
    fsq = np.asarray(freqs_hz) ** 2
    ftmp = fsq + 1.6e5
    return (fsq / ftmp) ** 2 * ((fsq + 1.44e6) / (fsq + 9.61e6))


def zwicker_weight(z):
    z = np.asarray(z, dtype=float)
    return np.where(z <= 15.0, 1.0, 0.066 * np.exp(0.171 * z))


# ---------------------------------------------------------------- cepstra


def deltas(x: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +-``width`` frames with edge replication."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        return x.copy()
    pad = np.concatenate([np.repeat(x[:1], width, axis=0), x, np.repeat(x[-1:], width, axis=0)])
    n = x.shape[0]
    num = np.zeros_like(x)
    for k in range(1, width + 1):
        num += k * (pad[width + k:width + k + n] - pad[width - k:width - k + n])
    return num / (2.0 * sum(k * k for k in range(1, width + 1)))


def frame_spectra(recording: Recording, config: FrameConfig):
    sr = recording.sample_rate
    config.check_rate(sr)
    n_len, n_hop = config.frame_samples(sr)
    frames = frame_signal(recording.samples, n_len, n_hop)
    win = _window(config.window, n_len)
    spec = rfft(frames * win, n=config.fft_size, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    return frames, power


def mfcc_from_power(power, frames, sample_rate, n_fft, n_mels, n_ceps) -> np.ndarray:
    fb = mel_filterbank(n_mels, n_fft, sample_rate)
    mel = power @ fb.T
    logmel = np.log(np.maximum(mel, TINY))
    ceps = dct(logmel, type=2, norm="ortho", axis=1)[:, :n_ceps]
    ceps[:, 0] = np.log(np.maximum(np.sum(frames * frames, axis=1), TINY))
    return ceps


def mfcc(recording: Recording, config: FrameConfig | None = None, n_ceps: int | None = None,
         n_mels: int | None = None) -> np.ndarray:
    """MFCC matrix (frames, n_ceps); c0 is the natural-log frame energy."""
    config = config or FrameConfig.for_rate(recording.sample_rate)
    frames, power = frame_spectra(recording, config)
    n_ceps = n_ceps or config.n_mfcc
    n_mels = max(n_mels or config.n_mels, n_ceps)
    return mfcc_from_power(power, frames, recording.sample_rate, config.fft_size, n_mels, n_ceps)


def levinson(r: np.ndarray, order: int):
    """Levinson-Durbin on rows of autocorrelations r (frames, >= order+1).

    Returns (a, err) with a[:, 0] == 1 and the prediction polynomial
    A(z) = sum_k a[k] z^-k.
    """
    n = r.shape[0]
    a = np.zeros((n, order + 1))
    a[:, 0] = 1.0
    err = r[:, 0].copy()
    for i in range(1, order + 1):
        acc = r[:, i] + np.sum(a[:, 1:i] * r[:, i - 1:0:-1], axis=1) if i > 1 else r[:, 1].copy()
        k = -acc / np.maximum(err, TINY)
        prev = a[:, 1:i].copy()
        a[:, 1:i] = prev + k[:, None] * prev[:, ::-1]
        a[:, i] = k
        err = err * (1.0 - k * k)
    return a, np.maximum(err, TINY)


def lpc_to_cepstrum(a: np.ndarray, err: np.ndarray, n_ceps: int) -> np.ndarray:
    order = a.shape[1] - 1
    c = np.zeros((a.shape[0], n_ceps))
    c[:, 0] = np.log(err)
    for n in range(1, n_ceps):
        acc = -a[:, n] if n <= order else np.zeros(a.shape[0])
        for k in range(max(1, n - order), n):
            acc = acc - (k / n) * c[:, k] * a[:, n - k]
        c[:, n] = acc
    return c


def plp_from_power(power, sample_rate, n_fft, order=12, n_ceps=13) -> np.ndarray:
    wts, centers = bark_filterbank(n_fft, sample_rate)
    bark_pow = power @ wts.T
    center_hz = 600.0 * np.sinh(centers / 6.0)
    aspec = (bark_pow * equal_loudness(center_hz)) ** 0.33
    aspec[:, 0] = aspec[:, 1]
    aspec[:, -1] = aspec[:, -2]
    r = irfft(aspec + 1e-12, axis=1)[:, :order + 1]
    a, err = levinson(r, order)
    return lpc_to_cepstrum(a, err, n_ceps)


# ---------------------------------------------------------------- pitch


def _nccf(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized cross-correlation for lags 0..max_lag, one row per frame."""
    n = frames.shape[1]
    max_lag = min(max_lag, n - 1)
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    spec = rfft(frames, n=nfft, axis=1)
    acf = irfft(spec.real ** 2 + spec.imag ** 2, n=nfft, axis=1)[:, :max_lag + 1]
    sq = frames * frames
    csum = np.cumsum(sq, axis=1)
    total = csum[:, -1:]
    lags = np.arange(max_lag + 1)
    e_head = csum[:, n - 1 - lags]
    e_tail = total - np.concatenate([np.zeros((frames.shape[0], 1)), csum[:, :max_lag]], axis=1)
    denom = np.sqrt(np.maximum(e_head * e_tail, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 1e-12 * np.maximum(total, TINY), acf / denom, 0.0)
    out[denom <= 0] = 0.0
    return np.clip(out, -1.0, 1.0)


def _pitch_from_nccf(r: np.ndarray, sample_rate: int, fmin: float, fmax: float, threshold: float):
    n_frames, width = r.shape
    lag_min = max(2, int(math.floor(sample_rate / fmax)))
    lag_max = min(width - 2, int(math.ceil(sample_rate / fmin)))
    inner = r[:, 1:-1]
    peaks = np.zeros_like(r, dtype=bool)
    peaks[:, 1:-1] = (inner >= r[:, :-2]) & (inner > r[:, 2:]) & (inner > 0)
    peaks[:, :2] = False
    peaks[:, lag_max + 1:] = False
    vals = np.where(peaks, r, -np.inf)
    best = vals.max(axis=1)
    has_peak = np.isfinite(best)
    strong = peaks & (r >= OCTAVE_GUARD * best[:, None])
    fund = np.argmax(strong, axis=1)

    band_peaks = np.where(peaks[:, lag_min:lag_max + 1], r[:, lag_min:lag_max + 1], -np.inf).max(axis=1)
    band_max = r[:, lag_min:lag_max + 1].max(axis=1)
    vp = np.where(np.isfinite(band_peaks), band_peaks, band_max)
    vp = np.clip(vp, 0.0, 1.0)

    f0 = np.zeros(n_frames)
    ok = has_peak & (fund >= lag_min) & (vp >= threshold)
    rows = np.nonzero(ok)[0]
    if rows.size:
        t = fund[rows]
        y0, y1, y2 = r[rows, t - 1], r[rows, t], r[rows, t + 1]
        den = y0 - 2.0 * y1 + y2
        shift = np.where(np.abs(den) > 1e-12, 0.5 * (y0 - y2) / np.where(den == 0, 1.0, den), 0.0)
        shift = np.clip(shift, -0.5, 0.5)
        f0[rows] = sample_rate / (t + shift)
    return f0, vp


def pitch_window(sample_rate: int, fmin: float) -> int:
    """Shortest analysis width covering two periods of ``fmin`` (plus the two lags peak picking needs)."""
    return int(math.ceil(2.0 * sample_rate / fmin)) + 2


def estimate_f0(frame, sample_rate: int, fmin: float = 60.0, fmax: float = 400.0,
                voicing_threshold: float = 0.5) -> tuple[float, float]:
    """Autocorrelation pitch of one frame: ``(f0_hz, voicing_prob)``.

    ``f0`` is 0 when the frame is unvoiced or its fundamental lies outside
    ``[fmin, fmax]``; ``voicing_prob`` is the normalized autocorrelation peak
    in the search band, clamped to [0, 1].
    """
    frame = np.asarray(frame, dtype=float)[None, :]
    r = _nccf(frame, int(math.ceil(sample_rate / fmin)) + 1)
    f0, vp = _pitch_from_nccf(r, sample_rate, fmin, fmax, voicing_threshold)
    return float(f0[0]), float(vp[0])


def frame_pitch(recording: Recording, config: FrameConfig):
    """F0 and voicing per analysis frame, on windows wide enough for ``f0_min``."""
    sr = recording.sample_rate
    n_len, n_hop = config.frame_samples(sr)
    n_frames = 1 + (len(recording.samples) - n_len) // n_hop
    width = max(n_len, pitch_window(sr, config.f0_min))
    pf = _centered_frames(recording.samples, n_frames, n_len, n_hop, width)
    r = _nccf(pf, int(math.ceil(sr / config.f0_min)) + 1)
    return _pitch_from_nccf(r, sr, config.f0_min, config.f0_max, config.voicing_threshold)


def jitter_local(f0_track) -> float:
    """Mean absolute difference of consecutive voiced periods over the mean period.

    Only adjacent frames that are both voiced (f0 > 0) contribute a
    difference. Returns NaN when no such pair exists.
    """
    f0 = np.asarray(f0_track, dtype=float)
    voiced = f0 > 0
    pairs = voiced[1:] & voiced[:-1]
    if not pairs.any():
        return math.nan
    periods = np.where(voiced, 1.0 / np.where(voiced, f0, 1.0), 0.0)
    diffs = np.abs(np.diff(periods))[pairs]
    return float(diffs.mean() / periods[voiced].mean())


def _frame_jitter(f0: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f0)
    both = (f0[1:] > 0) & (f0[:-1] > 0)
    p = np.where(f0 > 0, 1.0 / np.where(f0 > 0, f0, 1.0), 0.0)
    d = np.abs(p[1:] - p[:-1]) / np.where(both, 0.5 * (p[1:] + p[:-1]), 1.0)
    out[1:] = np.where(both, d, 0.0)
    return out


# ---------------------------------------------------------------- analysis


def analyze(recording: Recording, config: FrameConfig | None = None) -> FrameSeries:
    """Compute every frame descriptor for a recording."""
    config = config or FrameConfig.for_rate(recording.sample_rate)
    sr = recording.sample_rate
    frames, power = frame_spectra(recording, config)
    n_fft = config.fft_size
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sr)

    ms = np.mean(frames * frames, axis=1)
    with np.errstate(divide="ignore"):
        energy_db = np.maximum(10.0 * np.log10(ms), config.energy_floor_db)

    fb = mel_filterbank(config.n_mels, n_fft, sr)
    mel = power @ fb.T
    loudness = np.sum(mel, axis=1) ** 0.3
    ceps = mfcc_from_power(power, frames, sr, n_fft, config.n_mels, config.n_mfcc)
    d1 = deltas(ceps)
    d2 = deltas(d1)
    plp = plp_from_power(power, sr, n_fft, config.plp_order, 13)

    f0, vp = frame_pitch(recording, config)

    bin_scale = 2.0 / (n_fft * frames.shape[1])

    def band_db(lo, hi):
        sel = (freqs >= lo) & (freqs < hi)
        e = power[:, sel].sum(axis=1) * bin_scale
        with np.errstate(divide="ignore"):
            return np.maximum(10.0 * np.log10(e), config.energy_floor_db)

    total = power.sum(axis=1)
    cum = np.cumsum(power, axis=1)
    roll_idx = np.argmax(cum >= 0.25 * total[:, None], axis=1)
    rolloff = np.where(total > 0, freqs[roll_idx], 0.0)

    mag = np.sqrt(power)
    msum = mag.sum(axis=1, keepdims=True)
    p = np.where(msum > 0, mag / np.where(msum > 0, msum, 1.0), 0.0)
    flux = np.zeros(len(p))
    flux[1:] = np.sum((p[1:] - p[:-1]) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    entropy = -plogp.sum(axis=1)
    mu = p @ freqs
    dev = freqs[None, :] - mu[:, None]
    var = np.sum(p * dev ** 2, axis=1)
    third = np.sum(p * dev ** 3, axis=1)
    skew = np.where(var > 0, third / np.where(var > 0, var, 1.0) ** 1.5, 0.0)

    wts, centers = bark_filterbank(n_fft, sr)
    spec_loud = (power @ wts.T) ** 0.23
    sl_sum = spec_loud.sum(axis=1)
    sharp = np.where(sl_sum > 0, 0.11 * (spec_loud @ (zwicker_weight(centers) * centers))
                     / np.where(sl_sum > 0, sl_sum, 1.0), 0.0)

    rr = np.clip(vp, 1e-4, 1.0 - 1e-4)
    harmonicity = 10.0 * np.log10(rr / (1.0 - rr))

    with np.errstate(divide="ignore"):
        logp = np.log(power + TINY)
    geo = np.exp(logp.mean(axis=1))
    arith = power.mean(axis=1) + TINY
    flatness = np.where(total > 0, np.clip(geo / arith, 0.0, 1.0), 0.0)

    scalars = {
        "energy_db": energy_db,
        "loudness": loudness,
        "f0": f0,
        "voicing_prob": vp,
        "band_energy_250_650": band_db(250.0, 650.0),
        "band_energy_1k_4k": band_db(1000.0, 4000.0),
        "spectral_rolloff25": rolloff,
        "spectral_flux": flux,
        "spectral_entropy": entropy,
        "spectral_skewness": skew,
        "sharpness": sharp,
        "harmonicity": harmonicity,
        "flatness": flatness,
        "jitter_local": _frame_jitter(f0),
    }
    return FrameSeries(config, sr, recording.duration, ceps, d1, d2, plp, scalars)


# ---------------------------------------------------------------- VAD


def frame_boundaries(n_frames: int, config: FrameConfig, duration: float) -> np.ndarray:
    """Time boundaries partitioning [0, duration] between consecutive frames."""
    b = np.arange(n_frames + 1) * config.hop + (config.frame_len - config.hop) / 2.0
    b[0] = 0.0
    b[-1] = duration
    return b


def _fill_short_gaps(voiced: np.ndarray, max_gap: int) -> np.ndarray:
    out = voiced.copy()
    if max_gap <= 0 or not out.any():
        return out
    idx = np.nonzero(out)[0]
    for a, b in zip(idx[:-1], idx[1:]):
        if 1 < b - a <= max_gap + 1:
            out[a:b] = True
    return out


def segments_from_frames(voiced: np.ndarray, bounds: np.ndarray) -> tuple:
    segs = []
    start = 0
    for i in range(1, len(voiced) + 1):
        if i == len(voiced) or voiced[i] != voiced[start]:
            segs.append((float(bounds[start]), float(bounds[i]), bool(voiced[start])))
            start = i
    return tuple(segs)


def vad(recording: Recording, config: FrameConfig | None = None, margin_db: float = 10.0,
        hangover: int = 10, energy_db: np.ndarray | None = None) -> VadSegmentation:
    """Energy-threshold voice activity detection.

    A frame is voiced when its energy exceeds
    ``max(floor + margin, min(p10 + margin, max - margin))`` where p10 is the
    10th-percentile frame energy. Unvoiced gaps of at most ``hangover``
    frames between voiced frames are bridged.
    """
    config = config or FrameConfig.for_rate(recording.sample_rate)
    if energy_db is None:
        energy_db = frame_energy_db(recording, config)
    p10 = float(np.percentile(energy_db, 10))
    top = float(energy_db.max())
    thr = max(config.energy_floor_db + margin_db, min(p10 + margin_db, top - margin_db))
    voiced = energy_db > thr
    voiced = _fill_short_gaps(voiced, hangover)
    bounds = frame_boundaries(len(energy_db), config, recording.duration)
    return VadSegmentation(segments_from_frames(voiced, bounds), voiced, thr)
