"""GMM-UBM / total-variability i-vectors and TDNN x-vectors over sliding windows."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh
from scipy.special import logsumexp

from . import dsp
from .acoustic_features import STRIDE_S, WINDOW_S, frames_in_span, window_spans
from .corpus import Recording
from .errors import DataError, NumericError
from .serialize import load_model, save_model

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------- embeddings


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray
    kind: str  # "ivector" | "xvector_raw" | "xvector_projected"
    window: tuple = (0.0, 0.0)
    flagged: bool = False  # recording shorter than one window
    degenerate: bool = False  # zero vector that could not be normalized


def length_normalize(v) -> tuple[np.ndarray, bool]:
    """Scale to unit L2 norm; a zero vector stays zero and is reported degenerate."""
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        return np.zeros_like(v), True
    return v / norm, False


# ---------------------------------------------------------------- frontends


def cmvn(features: np.ndarray) -> np.ndarray:
    """Per-recording mean and variance normalization of a (frames, dims) matrix."""
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    return (features - mu) / np.where(sd > 1e-10, sd, 1.0)


def plp_pitch_features(recording: Recording, config: dsp.FrameConfig | None = None) -> np.ndarray:
    """45-d frames: 13 PLP cepstra, F0 and voicing probability, with deltas and accelerations."""
    config = config or dsp.FrameConfig.for_rate(recording.sample_rate)
    frames, power = dsp.frame_spectra(recording, config)
    plp = dsp.plp_from_power(power, recording.sample_rate, config.fft_size, config.plp_order, 13)
    f0, vp = dsp.frame_pitch(recording, config)
    base = np.column_stack([plp, f0, vp])
    d1 = dsp.deltas(base)
    return np.hstack([base, d1, dsp.deltas(d1)])


def mfcc30_features(recording: Recording, config: dsp.FrameConfig | None = None) -> np.ndarray:
    """30 MFCCs from 30 mel bands with per-recording mean normalization."""
    config = config or dsp.FrameConfig.for_rate(recording.sample_rate)
    m = dsp.mfcc(recording, config, n_ceps=30, n_mels=30)
    return m - m.mean(axis=0)


# ---------------------------------------------------------------- GMM-UBM


@dataclass(frozen=True, eq=False)
class Ubm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    llk_history: tuple = field(default=(), compare=False)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_loglik(self, X: np.ndarray) -> np.ndarray:
        """log w_c + log N(x | mu_c, diag var_c), shape (frames, components)."""
        inv = 1.0 / self.variances
        const = np.log(self.weights) - 0.5 * (self.dim * LOG_2PI + np.log(self.variances).sum(axis=1)
                                              + np.sum(self.means ** 2 * inv, axis=1))
        return const + X @ (self.means * inv).T - 0.5 * (X * X) @ inv.T

    def posteriors(self, X: np.ndarray):
        ll = self.component_loglik(X)
        tot = logsumexp(ll, axis=1)
        return np.exp(ll - tot[:, None]), tot

    def avg_loglik(self, X: np.ndarray) -> float:
        return float(logsumexp(self.component_loglik(X), axis=1).mean())

    def save(self, path) -> None:
        save_model(path, "ubm", {"weights": self.weights, "means": self.means, "variances": self.variances},
                   {"n_components": self.n_components, "dim": self.dim,
                    "llk_history": list(self.llk_history)})

    @classmethod
    def load(cls, path) -> "Ubm":
        _, a, meta = load_model(path, "ubm")
        return cls(a["weights"], a["means"], a["variances"], tuple(meta.get("llk_history", ())))


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with probability proportional to D^2."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total))
            idx = min(idx, n - 1)
        centers[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def train_ubm(frames, n_components: int, n_iters: int = 10, seed: int = 0,
              var_floor_ratio: float = 1e-3, init_max_frames: int = 20000) -> Ubm:
    """Diagonal-covariance GMM trained by EM from k-means++ seeds.

    ``llk_history`` holds the average frame log-likelihood before each
    iteration and after the last one (``n_iters + 1`` values).
    """
    X = np.asarray(frames, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("UBM training needs a non-empty (frames, dims) matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite values in UBM training features")
    n, d = X.shape
    if n_components > n:
        raise DataError(f"{n_components} components requested for {n} frames")
    rng = np.random.default_rng(seed)
    gvar = X.var(axis=0)
    floor = np.maximum(var_floor_ratio * gvar, 1e-10)
    init = X if n <= init_max_frames else X[rng.choice(n, init_max_frames, replace=False)]
    means = kmeans_pp(init, n_components, rng)
    variances = np.tile(np.maximum(gvar, floor), (n_components, 1))
    weights = np.full(n_components, 1.0 / n_components)
    ubm = Ubm(weights, means, variances)
    history = []
    for _ in range(n_iters):
        post, tot = ubm.posteriors(X)
        history.append(float(tot.mean()))
        occ = post.sum(axis=0)
        alive = occ > 1e-10
        safe = np.where(alive, occ, 1.0)[:, None]
        new_means = np.where(alive[:, None], (post.T @ X) / safe, ubm.means)
        sq = (post.T @ (X * X)) / safe - new_means ** 2
        new_vars = np.where(alive[:, None], np.maximum(sq, floor), ubm.variances)
        new_w = np.maximum(occ, 1e-10)
        ubm = Ubm(new_w / new_w.sum(), new_means, new_vars)
    history.append(ubm.avg_loglik(X))
    return Ubm(ubm.weights, ubm.means, ubm.variances, tuple(history))


def accumulate_bw_stats(ubm: Ubm, frames) -> tuple[np.ndarray, np.ndarray]:
    """Zeroth-order N (C,) and centered first-order F (C, D) Baum-Welch statistics."""
    X = np.asarray(frames, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("no frames to accumulate statistics over")
    post, _ = ubm.posteriors(X)
    N = post.sum(axis=0)
    F = post.T @ X - N[:, None] * ubm.means
    return N, F


# ---------------------------------------------------------------- total variability


@dataclass(frozen=True, eq=False)
class TvModel:
    T: np.ndarray  # (C*D, R)
    n_components: int
    dim: int
    llk_history: tuple = field(default=(), compare=False)

    @property
    def rank(self) -> int:
        return self.T.shape[1]

    def blocks(self) -> np.ndarray:
        return self.T.reshape(self.n_components, self.dim, self.rank)

    def save(self, path) -> None:
        save_model(path, "tv", {"T": self.T},
                   {"n_components": self.n_components, "dim": self.dim, "rank": self.rank,
                    "llk_history": list(self.llk_history)})

    @classmethod
    def load(cls, path) -> "TvModel":
        _, a, meta = load_model(path, "tv")
        return cls(a["T"], int(meta["n_components"]), int(meta["dim"]), tuple(meta.get("llk_history", ())))


def _precision_products(T3: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """T_c^T Sigma_c^-1 T_c for every component, shape (C, R, R)."""
    return np.einsum("cdr,cd,cds->crs", T3, 1.0 / sigma, T3, optimize=True)


def ivector_posterior(T3: np.ndarray, sigma: np.ndarray, N: np.ndarray, F: np.ndarray,
                      TtSiT: np.ndarray | None = None):
    """Posterior mean and covariance of the latent factor for one utterance.

    L = I + sum_c N_c T_c^T Sigma_c^-1 T_c; mean = L^-1 T^T Sigma^-1 F.
    Also returns ``b = T^T Sigma^-1 F`` and log|L| for the objective.
    """
    R = T3.shape[2]
    if TtSiT is None:
        TtSiT = _precision_products(T3, sigma)
    L = np.eye(R) + np.tensordot(N, TtSiT, axes=1)
    b = np.einsum("cdr,cd->r", T3, F / sigma)
    cf = cho_factor(L)
    mean = cho_solve(cf, b)
    cov = cho_solve(cf, np.eye(R))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return mean, cov, b, logdet


def tv_objective(tv: TvModel, ubm: Ubm, stats_list) -> float:
    """T-dependent part of sum_u log p(stats_u | T): sum(-1/2 log|L| + 1/2 b^T L^-1 b)."""
    T3 = tv.blocks()
    P = _precision_products(T3, ubm.variances)
    total = 0.0
    for N, F in stats_list:
        mean, _, b, logdet = ivector_posterior(T3, ubm.variances, N, F, P)
        total += -0.5 * logdet + 0.5 * float(b @ mean)
    return total


def train_tv(stats_list, ubm: Ubm, dim: int = 125, n_iters: int = 10, seed: int = 0,
             init_scale: float = 0.1) -> TvModel:
    """EM estimation of the total-variability matrix from per-utterance statistics."""
    stats_list = list(stats_list)
    if len(stats_list) < 2:
        raise DataError("total-variability training needs statistics from at least 2 utterances")
    C, D = ubm.means.shape
    if dim > C * D:
        raise DataError(f"TV rank {dim} exceeds supervector dimension {C * D}")
    rng = np.random.default_rng(seed)
    sigma = ubm.variances
    T3 = rng.standard_normal((C, D, dim)) * (init_scale * np.sqrt(sigma))[:, :, None]
    history = []
    for _ in range(n_iters):
        P = _precision_products(T3, sigma)
        A = np.zeros((C, dim, dim))
        Cacc = np.zeros((C, D, dim))
        obj = 0.0
        for N, F in stats_list:
            mean, cov, b, logdet = ivector_posterior(T3, sigma, N, F, P)
            obj += -0.5 * logdet + 0.5 * float(b @ mean)
            A += N[:, None, None] * (cov + np.outer(mean, mean))[None]
            Cacc += F[:, :, None] * mean[None, None, :]
        history.append(obj)
        for c in range(C):
            Ac = A[c] + 1e-10 * np.eye(dim)
            T3[c] = np.linalg.solve(Ac, Cacc[c].T).T
    tv = TvModel(T3.reshape(C * D, dim), C, D)
    history.append(tv_objective(tv, ubm, stats_list))
    return TvModel(tv.T, C, D, tuple(history))


def extract_ivector(tv: TvModel, ubm: Ubm, stats, window=(0.0, 0.0)) -> Embedding:
    """Length-normalized posterior mean of the total-variability factor."""
    N, F = stats
    mean, _, _, _ = ivector_posterior(tv.blocks(), ubm.variances, N, F)
    vec, degenerate = length_normalize(mean)
    return Embedding(vec, "ivector", tuple(window), degenerate=degenerate)


# ---------------------------------------------------------------- TDNN x-vectors


@dataclass(frozen=True, eq=False)
class TdnnLayer:
    weight: np.ndarray  # (out, in * len(context))
    bias: np.ndarray
    context: tuple

    @property
    def span(self) -> int:
        return max(self.context) - min(self.context)


@dataclass(frozen=True, eq=False)
class TdnnModel:
    """Time-delay layers, mean+std statistics pooling and two dense layers."""

    layers: tuple
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray

    DEFAULT_CONTEXTS = ((-2, -1, 0, 1, 2), (-2, 0, 2), (-3, 0, 3), (0,), (0,))
    DEFAULT_DIMS = (512, 512, 512, 512, 1500)

    def __post_init__(self):
        d_in = None
        for layer in self.layers:
            if d_in is not None and layer.weight.shape[1] != d_in * len(layer.context):
                raise DataError("TDNN layer input dimensions do not chain")
            d_in = layer.weight.shape[0]
        if self.dense1_w.shape[1] != 2 * d_in:
            raise DataError("first dense layer must take the pooled mean+std vector")
        if self.dense2_w.shape[1] != self.dense1_w.shape[0]:
            raise DataError("dense layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        first = self.layers[0]
        return first.weight.shape[1] // len(first.context)

    @property
    def embed_dim(self) -> int:
        return self.dense1_w.shape[0]

    @property
    def receptive_field(self) -> int:
        return 1 + sum(layer.span for layer in self.layers)

    @classmethod
    def random(cls, seed: int = 0, input_dim: int = 30, contexts=DEFAULT_CONTEXTS, dims=DEFAULT_DIMS,
               embed_dim: int = 512) -> "TdnnModel":
        """He-initialized network, for tests and for runs without pretrained weights."""
        rng = np.random.default_rng(seed)
        layers = []
        d_in = input_dim
        for ctx, d_out in zip(contexts, dims):
            fan_in = d_in * len(ctx)
            layers.append(TdnnLayer(rng.standard_normal((d_out, fan_in)) * math.sqrt(2.0 / fan_in),
                                    np.zeros(d_out), tuple(ctx)))
            d_in = d_out
        w1 = rng.standard_normal((embed_dim, 2 * d_in)) * math.sqrt(1.0 / (2 * d_in))
        w2 = rng.standard_normal((embed_dim, embed_dim)) * math.sqrt(2.0 / embed_dim)
        return cls(tuple(layers), w1, np.zeros(embed_dim), w2, np.zeros(embed_dim))

    def save(self, path) -> None:
        arrays = {}
        for i, layer in enumerate(self.layers):
            arrays[f"td{i}_w"] = layer.weight
            arrays[f"td{i}_b"] = layer.bias
        arrays.update(dense1_w=self.dense1_w, dense1_b=self.dense1_b,
                      dense2_w=self.dense2_w, dense2_b=self.dense2_b)
        save_model(path, "tdnn", arrays, {"contexts": [list(l.context) for l in self.layers],
                                          "input_dim": self.input_dim, "embed_dim": self.embed_dim})

    @classmethod
    def load(cls, path) -> "TdnnModel":
        _, a, meta = load_model(path, "tdnn")
        layers = tuple(TdnnLayer(a[f"td{i}_w"], a[f"td{i}_b"], tuple(ctx))
                       for i, ctx in enumerate(meta["contexts"]))
        return cls(layers, a["dense1_w"], a["dense1_b"], a["dense2_w"], a["dense2_b"])


def tdnn_layer_forward(layer: TdnnLayer, X: np.ndarray) -> np.ndarray:
    lo, hi = min(layer.context), max(layer.context)
    n_out = X.shape[0] - (hi - lo)
    spliced = np.hstack([X[c - lo:c - lo + n_out] for c in layer.context])
    return np.maximum(spliced @ layer.weight.T + layer.bias, 0.0)


def pooled_statistics(tdnn: TdnnModel, frames) -> np.ndarray:
    """Concatenated mean and (population) std over time of the last TD layer's output."""
    X = np.asarray(frames, dtype=float)
    if X.shape[0] < tdnn.receptive_field:
        raise DataError(f"{X.shape[0]} frames is below the TDNN receptive field of {tdnn.receptive_field}")
    for layer in tdnn.layers:
        X = tdnn_layer_forward(layer, X)
    return np.concatenate([X.mean(axis=0), X.std(axis=0)])


def xvector_forward(tdnn: TdnnModel, mfcc30_frames, window=(0.0, 0.0)) -> Embedding:
    """Raw x-vector: the first dense layer's affine output on pooled statistics."""
    pooled = pooled_statistics(tdnn, mfcc30_frames)
    return Embedding(pooled @ tdnn.dense1_w.T + tdnn.dense1_b, "xvector_raw", tuple(window))


# ---------------------------------------------------------------- LDA projection


@dataclass(frozen=True, eq=False)
class LdaBasis:
    matrix: np.ndarray  # (out_dim, in_dim)
    mean: np.ndarray
    n_fisher: int = 0

    def save(self, path) -> None:
        save_model(path, "lda_basis", {"matrix": self.matrix, "mean": self.mean}, {"n_fisher": self.n_fisher})

    @classmethod
    def load(cls, path) -> "LdaBasis":
        _, a, meta = load_model(path, "lda_basis")
        return cls(a["matrix"], a["mean"], int(meta.get("n_fisher", 0)))


def _fix_sign(rows: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(rows), axis=1)
    signs = np.sign(rows[np.arange(rows.shape[0]), idx])
    return rows * np.where(signs == 0, 1.0, signs)[:, None]


def train_lda_basis(embeddings, labels, n_dims: int = 200, ridge: float = 1e-6) -> LdaBasis:
    """Fisher directions first, then principal axes of the remaining variance.

    Strict Fisher LDA yields at most ``n_classes - 1`` directions; when more
    are requested the basis is completed with the leading principal axes of
    the data after the Fisher directions are projected out.
    """
    X = np.asarray(embeddings, dtype=float)
    y = np.asarray(labels)
    n, d = X.shape
    n_dims = min(n_dims, d)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise DataError("LDA needs at least two classes")
    mu = X.mean(axis=0)
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for c in classes:
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        dc = Xc - mc
        Sw += dc.T @ dc
        Sb += Xc.shape[0] * np.outer(mc - mu, mc - mu)
    Sw /= n
    Sb /= n
    tr = float(np.trace(Sw))
    Sw_r = Sw + ridge * (tr if tr > 0 else 1.0) * np.eye(d)
    n_fisher = min(len(classes) - 1, n_dims)
    vals, vecs = eigh(Sb, Sw_r)
    fisher = vecs[:, ::-1][:, :n_fisher].T
    fisher = fisher / np.linalg.norm(fisher, axis=1, keepdims=True)
    rows = [fisher]
    if n_dims > n_fisher:
        Q, _ = np.linalg.qr(fisher.T)
        Xc = X - mu
        resid = Xc - (Xc @ Q) @ Q.T
        cov = resid.T @ resid / n
        cvals, cvecs = np.linalg.eigh(cov)
        order = np.argsort(cvals)[::-1]
        extra = cvecs[:, order].T
        extra = extra - (extra @ Q) @ Q.T
        norms = np.linalg.norm(extra, axis=1)
        extra = extra[norms > 1e-8][: n_dims - n_fisher]
        rows.append(extra / np.linalg.norm(extra, axis=1, keepdims=True))
    matrix = _fix_sign(np.vstack(rows))
    return LdaBasis(matrix, mu, n_fisher)


def lda_project(basis, emb) -> np.ndarray:
    if isinstance(basis, LdaBasis):
        return basis.matrix @ (np.asarray(emb, dtype=float) - basis.mean)
    return np.asarray(basis, dtype=float) @ np.asarray(emb, dtype=float)


def lda_project_and_norm(basis, emb) -> Embedding:
    """Project (a raw embedding or its vector) and length-normalize."""
    window = emb.window if isinstance(emb, Embedding) else (0.0, 0.0)
    flagged = emb.flagged if isinstance(emb, Embedding) else False
    vec = emb.vector if isinstance(emb, Embedding) else emb
    unit, degenerate = length_normalize(lda_project(basis, vec))
    return Embedding(unit, "xvector_projected", window, flagged, degenerate)


# ---------------------------------------------------------------- sliding windows


class IvectorExtractor:
    """PLP+pitch frontend, CMVN per recording, UBM statistics and TV posterior."""

    kind = "ivector"

    def __init__(self, ubm: Ubm, tv: TvModel, config: dsp.FrameConfig | None = None):
        self.ubm = ubm
        self.tv = tv
        self.config = config

    def frame_features(self, recording: Recording):
        cfg = self.config or dsp.FrameConfig.for_rate(recording.sample_rate)
        return cmvn(plp_pitch_features(recording, cfg)), cfg

    def embed(self, features: np.ndarray, window) -> Embedding:
        return extract_ivector(self.tv, self.ubm, accumulate_bw_stats(self.ubm, features), window)


class XvectorExtractor:
    """30-MFCC frontend and TDNN forward pass; optional LDA projection."""

    def __init__(self, tdnn: TdnnModel, lda: LdaBasis | None = None, config: dsp.FrameConfig | None = None):
        self.tdnn = tdnn
        self.lda = lda
        self.config = config

    @property
    def kind(self) -> str:
        return "xvector_raw" if self.lda is None else "xvector_projected"

    def frame_features(self, recording: Recording):
        cfg = self.config or dsp.FrameConfig.for_rate(recording.sample_rate)
        return mfcc30_features(recording, cfg), cfg

    def embed(self, features: np.ndarray, window) -> Embedding:
        raw = xvector_forward(self.tdnn, features, window)
        return raw if self.lda is None else lda_project_and_norm(self.lda, raw)


def window_frame_sets(n_frames: int, config: dsp.FrameConfig, duration: float,
                      win: float = WINDOW_S, hop: float = STRIDE_S):
    """(span, frame indices, flagged) per window under the shared stride rule."""
    spans, short = window_spans(duration, win, hop)
    out = []
    for a, b in spans:
        idx = frames_in_span(n_frames, config.frame_len, config.hop, a, b)
        if short or idx.size == 0:
            idx = np.arange(n_frames)
        out.append(((a, b), idx, short))
    return out


def windowed_embeddings(recording: Recording, extractor, win: float = WINDOW_S,
                        hop: float = STRIDE_S) -> list:
    """One embedding per sliding window; a short recording gives one flagged embedding."""
    feats, cfg = extractor.frame_features(recording)
    out = []
    for span, idx, short in window_frame_sets(feats.shape[0], cfg, recording.duration, win, hop):
        emb = extractor.embed(feats[idx], span)
        out.append(Embedding(emb.vector, emb.kind, span, short, emb.degenerate))
    return out
