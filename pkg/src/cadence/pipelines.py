"""The six detection systems as extract / fit / score triples.

Extraction is label-free and runs once per subject. ``fit`` sees only the
training subjects of a fold and returns an immutable model; ``score``
maps one subject's features to a real score. Speech SVM systems emit the
mean signed window margin (threshold 0), the fluency LDA emits a signed
projection (threshold 0), and the two text systems emit probabilities
(threshold 0.5).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import dsp, embeddings as emb
from .acoustic_features import FUNCTIONAL_LLDS, cfs_select, compute_fluency, compute_functionals
from .chat import load_transcript
from .classifiers import aggregate_window_scores, lstm_predict_subject, train_lda, train_lstm, train_svm
from .corpus import Manifest, Subject, load_wav
from .errors import DataError
from .text_features import (MinMaxScaler, compute_linguistic, default_lexicon, load_embedding_table,
                            pad_intervention)

SYSTEMS = ("ivector", "xvector", "functionals", "fluency", "rnn", "linguistic")
MODALITY = {"ivector": "speech", "xvector": "speech", "functionals": "speech", "fluency": "speech",
            "rnn": "text", "linguistic": "text"}
THRESHOLD = {"ivector": 0.0, "xvector": 0.0, "functionals": 0.0, "fluency": 0.0, "rnn": 0.5, "linguistic": 0.5}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    window_s: float = 3.0
    hop_s: float = 2.0
    svm_C: float = 1.0
    ubm_components: int = 512
    ubm_iters: int = 10
    ubm_max_frames: int = 200000
    tv_dim: int = 125
    tv_iters: int = 10
    tdnn_weights: str | None = None
    lda_dims: int = 200
    cfs_k_max: int = 57
    lstm_epochs: int = 10
    lstm_batch: int = 16
    lstm_lr: float = 1e-3
    lstm_dropout: float = 0.1

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise DataError(f"unknown pipeline config key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)


# Smaller embedding models that keep a 40-subject LOSO run within minutes.
DESK_OVERRIDES = {"ubm_components": 32, "ubm_iters": 8, "tv_dim": 20, "tv_iters": 5, "lda_dims": 50}


@dataclass(eq=False)
class Context:
    """Shared, label-free resources built once per experiment."""

    config: PipelineConfig
    manifest: Manifest | None = None
    ubm: emb.Ubm | None = None
    tdnn: emb.TdnnModel | None = None
    table: object = None
    lexicon: dict = field(default_factory=dict)


def fold_seed(seed: int, fold: int) -> list:
    """Seed sequence for a fold; fold -1 (train on everything) maps to stream 0."""
    return [int(seed), int(fold) + 1]


def _standardizer(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 1e-12, sd, 1.0)


# ---------------------------------------------------------------- base


class System:
    name = "system"
    modality = "speech"
    threshold = 0.0
    needs = ()  # shared resources: "ubm", "tdnn", "table"

    def extract(self, subject: Subject, ctx: Context, cache: dict):
        raise NotImplementedError

    def fit(self, feats: list, labels: np.ndarray, fold: int, ctx: Context):
        raise NotImplementedError

    def score(self, model, feat) -> float:
        raise NotImplementedError


def _recording(subject, cache):
    if "recording" not in cache:
        cache["recording"] = load_wav(subject.audio_path)
    return cache["recording"]


def _frames(subject, cache):
    if "frames" not in cache:
        cache["frames"] = dsp.analyze(_recording(subject, cache))
    return cache["frames"]


def _transcript(subject, cache):
    if "transcript" not in cache:
        cache["transcript"] = load_transcript(subject.transcript_path, subject.id)
    return cache["transcript"]


class _WindowSvm(System):
    """Linear SVM on per-window vectors; the subject score is the mean window margin."""

    def _fit_svm(self, windows, labels, ctx):
        X = np.vstack(windows)
        y = np.concatenate([np.full(w.shape[0], 1.0 if l else -1.0) for w, l in zip(windows, labels)])
        return train_svm(X, y, "linear", C=ctx.config.svm_C)

    @staticmethod
    def _mean_margin(svm, X):
        return aggregate_window_scores(np.atleast_1d(svm.decision_function(X)))


class IvectorSystem(_WindowSvm):
    name = "ivector"
    needs = ("ubm",)

    def extract(self, subject, ctx, cache):
        rec = _recording(subject, cache)
        cfg = dsp.FrameConfig.for_rate(rec.sample_rate)
        feats = emb.cmvn(emb.plp_pitch_features(rec, cfg))
        sets = emb.window_frame_sets(feats.shape[0], cfg, rec.duration, ctx.config.window_s, ctx.config.hop_s)
        windows = [feats[idx] for _, idx, _ in sets]
        if ctx.ubm is None:
            return {"frames": windows}
        return {"stats": [emb.accumulate_bw_stats(ctx.ubm, w) for w in windows]}

    def fit(self, feats, labels, fold, ctx):
        cfg = ctx.config
        ubm = ctx.ubm
        if ubm is None:
            # no background set: the UBM is part of the fold's training
            X = np.vstack([w for f in feats for w in f["frames"]])
            ubm = emb.train_ubm(X[: cfg.ubm_max_frames], cfg.ubm_components, cfg.ubm_iters, seed=cfg.seed)
            stats = [[emb.accumulate_bw_stats(ubm, w) for w in f["frames"]] for f in feats]
        else:
            stats = [f["stats"] for f in feats]
        tv = emb.train_tv([s for st in stats for s in st], ubm, cfg.tv_dim, cfg.tv_iters, seed=fold_seed(cfg.seed, fold))
        windows = [np.vstack([emb.extract_ivector(tv, ubm, s).vector for s in st]) for st in stats]
        return {"ubm": ubm, "tv": tv, "svm": self._fit_svm(windows, labels, ctx)}

    def score(self, model, feat):
        ubm, tv = model["ubm"], model["tv"]
        stats = feat["stats"] if "stats" in feat else [emb.accumulate_bw_stats(ubm, w) for w in feat["frames"]]
        X = np.vstack([emb.extract_ivector(tv, ubm, s).vector for s in stats])
        return self._mean_margin(model["svm"], X)


class XvectorSystem(_WindowSvm):
    name = "xvector"
    needs = ("tdnn",)

    def extract(self, subject, ctx, cache):
        rec = _recording(subject, cache)
        ext = emb.XvectorExtractor(ctx.tdnn)
        return np.vstack([e.vector for e in emb.windowed_embeddings(rec, ext, ctx.config.window_s, ctx.config.hop_s)])

    def fit(self, feats, labels, fold, ctx):
        X = np.vstack(feats)
        y = np.concatenate([np.full(f.shape[0], int(l)) for f, l in zip(feats, labels)])
        basis = emb.train_lda_basis(X, y, ctx.config.lda_dims)
        proj = [self._project(basis, f) for f in feats]
        return {"lda": basis, "svm": self._fit_svm(proj, labels, ctx)}

    @staticmethod
    def _project(basis, raw):
        return np.vstack([emb.lda_project_and_norm(basis, r).vector for r in raw])

    def score(self, model, feat):
        return self._mean_margin(model["svm"], self._project(model["lda"], feat))


class FunctionalsSystem(_WindowSvm):
    name = "functionals"

    def extract(self, subject, ctx, cache):
        return compute_functionals(_frames(subject, cache), FUNCTIONAL_LLDS, ctx.config.window_s,
                                   ctx.config.hop_s).vectors

    def fit(self, feats, labels, fold, ctx):
        X = np.vstack(feats)
        y = np.concatenate([np.full(f.shape[0], float(l)) for f, l in zip(feats, labels)])
        sel = np.array(cfs_select(X, y, ctx.config.cfs_k_max).selected_indices, dtype=int)
        if sel.size == 0:
            sel = np.arange(X.shape[1])
        mu, sd = _standardizer(X[:, sel])
        windows = [(f[:, sel] - mu) / sd for f in feats]
        return {"selected": sel, "mu": mu, "sd": sd, "svm": self._fit_svm(windows, labels, ctx)}

    def score(self, model, feat):
        X = (feat[:, model["selected"]] - model["mu"]) / model["sd"]
        return self._mean_margin(model["svm"], X)


class FluencySystem(System):
    name = "fluency"

    def extract(self, subject, ctx, cache):
        rec = _recording(subject, cache)
        frames = _frames(subject, cache)
        seg = dsp.vad(rec, frames.config, energy_db=frames["energy_db"])
        return compute_fluency(rec, frames, seg).as_array()

    def fit(self, feats, labels, fold, ctx):
        X = np.vstack(feats)
        mu, sd = _standardizer(X)
        return {"mu": mu, "sd": sd, "lda": train_lda((X - mu) / sd, labels)}

    def score(self, model, feat):
        return float(model["lda"].score(((feat - model["mu"]) / model["sd"])[None])[0])


class RnnSystem(System):
    name = "rnn"
    modality = "text"
    threshold = 0.5
    needs = ("table",)

    def extract(self, subject, ctx, cache):
        tr = _transcript(subject, cache)
        return [pad_intervention(i, ctx.table) for i in tr.interventions]

    def fit(self, feats, labels, fold, ctx):
        cfg = ctx.config
        rows = [(p, l) for f, l in zip(feats, labels) for p in f]
        ids = np.stack([p.token_ids for p, _ in rows])
        mask = np.stack([p.mask for p, _ in rows])
        y = np.array([float(l) for _, l in rows])
        return train_lstm(ids, mask, y, ctx.table.lookup_matrix(), epochs=cfg.lstm_epochs, batch=cfg.lstm_batch,
                          lr=cfg.lstm_lr, dropout=cfg.lstm_dropout, seed=cfg.seed, fold=fold + 1)

    def score(self, model, feat):
        return lstm_predict_subject(model, feat)


class LinguisticSystem(System):
    name = "linguistic"
    modality = "text"
    threshold = 0.5

    def extract(self, subject, ctx, cache):
        return compute_linguistic(_transcript(subject, cache), ctx.lexicon or None)

    def fit(self, feats, labels, fold, ctx):
        X = np.vstack(feats)
        scaler = MinMaxScaler.fit(X)
        y = np.where(np.asarray(labels, dtype=bool), 1.0, -1.0)
        return {"scaler": scaler, "svm": train_svm(scaler.transform(X), y, "rbf", C=ctx.config.svm_C,
                                                   probability=True)}

    def score(self, model, feat):
        return float(model["svm"].predict_proba(model["scaler"].transform(feat[None]))[0])


_REGISTRY = {cls.name: cls for cls in (IvectorSystem, XvectorSystem, FunctionalsSystem, FluencySystem,
                                       RnnSystem, LinguisticSystem)}


def make_system(name: str) -> System:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise DataError(f"unknown system {name!r}; choose from {', '.join(SYSTEMS)}") from None


def parse_systems(spec) -> list:
    names = [s.strip() for s in spec.split(",")] if isinstance(spec, str) else list(spec)
    names = [n for n in names if n]
    if not names:
        raise DataError("no systems selected")
    if len(set(names)) != len(names):
        raise DataError("system ids must be unique")
    return [make_system(n) for n in names]


# ---------------------------------------------------------------- shared resources


def background_frames(paths, config: PipelineConfig) -> np.ndarray:
    mats = []
    for p in paths:
        rec = load_wav(p)
        mats.append(emb.cmvn(emb.plp_pitch_features(rec, dsp.FrameConfig.for_rate(rec.sample_rate))))
    return np.vstack(mats)


def build_context(manifest: Manifest | None, systems, config: PipelineConfig, ubm=None, tdnn=None,
                  table=None) -> Context:
    """Train or load the label-free shared models the selected systems need."""
    ctx = Context(config, manifest, ubm, tdnn, table, default_lexicon())
    needs = {n for s in systems for n in s.needs}
    if "ubm" in needs and ctx.ubm is None and manifest is not None and manifest.background_audio:
        X = background_frames(manifest.background_audio, config)
        ctx.ubm = emb.train_ubm(X[: config.ubm_max_frames], config.ubm_components, config.ubm_iters,
                                seed=config.seed)
    if "tdnn" in needs and ctx.tdnn is None:
        if config.tdnn_weights:
            ctx.tdnn = emb.TdnnModel.load(config.tdnn_weights)
        else:
            ctx.tdnn = emb.TdnnModel.random(seed=config.seed)
    if "table" in needs and ctx.table is None:
        if manifest is None or manifest.embedding_table is None:
            raise DataError("the rnn system needs an embedding table in the manifest")
        ctx.table = load_embedding_table(manifest.embedding_table)
    return ctx


def extract_subject(subject: Subject, systems, ctx: Context) -> dict:
    """Features of one subject for every system, sharing decoded audio and frames."""
    cache: dict = {}
    return {s.name: s.extract(subject, ctx, cache) for s in systems}


# ---------------------------------------------------------------- persistence

def _part_types():
    from .classifiers import LdaScorer, LstmModel, SvmModel
    return {"Ubm": emb.Ubm, "TvModel": emb.TvModel, "LdaBasis": emb.LdaBasis, "SvmModel": SvmModel,
            "LdaScorer": LdaScorer, "LstmModel": LstmModel}


def save_fitted(out_dir, name: str, model, meta: dict | None = None) -> list:
    """Write a fitted system model as one file per part plus ``<name>.model.json``.

    Returns the written paths.
    """
    import json
    from pathlib import Path

    from .serialize import save_model

    out = Path(out_dir)
    parts = model if isinstance(model, dict) else {"model": model}
    index: dict = {"system": name, "parts": {}, "meta": meta or {}}
    arrays = {}
    written = []
    for key in sorted(parts):
        val = parts[key]
        tname = type(val).__name__
        if tname in _part_types():
            path = out / f"{name}.{key}.bin"
            val.save(path)
            index["parts"][key] = {"type": tname, "file": path.name}
            written.append(path)
        elif isinstance(val, MinMaxScaler):
            arrays[f"{key}.lo"] = val.lo
            arrays[f"{key}.hi"] = val.hi
            index["parts"][key] = {"type": "MinMaxScaler"}
        else:
            arrays[key] = np.asarray(val)
            index["parts"][key] = {"type": "array"}
    if arrays:
        path = out / f"{name}.arrays.bin"
        save_model(path, f"{name}_arrays", arrays)
        written.append(path)
    path = out / f"{name}.model.json"
    path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return written + [path]


def load_fitted(out_dir, name: str):
    import json
    from pathlib import Path

    from .serialize import load_model

    out = Path(out_dir)
    index = json.loads((out / f"{name}.model.json").read_text())
    types = _part_types()
    arrays = {}
    if any(p["type"] in ("array", "MinMaxScaler") for p in index["parts"].values()):
        _, arrays, _ = load_model(out / f"{name}.arrays.bin")
    model = {}
    for key, p in index["parts"].items():
        if p["type"] in types:
            model[key] = types[p["type"]].load(out / p["file"])
        elif p["type"] == "MinMaxScaler":
            model[key] = MinMaxScaler(arrays[f"{key}.lo"], arrays[f"{key}.hi"])
        else:
            model[key] = arrays[key]
    return model["model"] if list(model) == ["model"] else model


def fit_all(manifest: Manifest, system: System, ctx: Context, features=None):
    """Fit a system on every subject of the manifest (no held-out subject)."""
    subjects = list(manifest.sorted().subjects)
    if features is None:
        features = [extract_subject(s, [system], ctx) for s in subjects]
    labels = np.array([1 if s.is_ad else 0 for s in subjects])
    return system.fit([f[system.name] for f in features], labels, -1, ctx)
