from pathlib import Path

import numpy as np
import pytest

from cadence.corpus import Manifest, Subject, load_manifest
from cadence.errors import FoldError, NumericError
from cadence.loso import loso_run
from cadence.pipelines import Context, PipelineConfig, System, build_context, make_system


def manifest_of(n, ad_every=2):
    subs = [Subject(f"P{i:02d}", "AD" if i % ad_every == 0 else "nonAD", "F", (60, 65),
                    Path(f"a{i}.wav"), Path(f"t{i}.cha")) for i in range(n)]
    return Manifest(tuple(subs))


class FeatureMean(System):
    """Scores a subject by its scalar feature minus the training mean."""
    name = "mean"

    def fit(self, feats, labels, fold, ctx):
        return float(np.mean([f["x"] for f in feats]))

    def score(self, model, feat):
        return feat["x"] - model


class Constant(System):
    name = "const"

    def fit(self, feats, labels, fold, ctx):
        return None

    def score(self, model, feat):
        return 1.0


class Spy(FeatureMean):
    name = "spy"
    seen: list = []

    def fit(self, feats, labels, fold, ctx):
        Spy.seen.append((fold, [f["id"] for f in feats]))
        return super().fit(feats, labels, fold, ctx)


def feats_for(m, system_names=("mean",)):
    rng = np.random.default_rng(0)
    return [{n: {"id": s.id, "x": float(rng.normal()) + s.is_ad} for n in system_names}
            for s in m.sorted().subjects]


CTX = Context(PipelineConfig())


def test_one_fold_per_subject():
    m = manifest_of(9)
    t = loso_run(m, [FeatureMean()], CTX, features=feats_for(m))
    rows = t.system_rows("mean")
    assert [r.subject_id for r in rows] == sorted(s.id for s in m.subjects)
    assert sorted(r.fold for r in rows) == list(range(9))


def test_spy_sees_no_held_out_subject():
    m = manifest_of(7)
    Spy.seen = []
    loso_run(m, [Spy()], CTX, features=feats_for(m, ("spy",)))
    ids = [s.id for s in m.sorted().subjects]
    assert len(Spy.seen) == 7
    for fold, train_ids in Spy.seen:
        assert ids[fold] not in train_ids and len(train_ids) == 6


def test_znorm_uses_training_scores_only():
    m = manifest_of(6)
    feats = feats_for(m)
    t = loso_run(m, [FeatureMean()], CTX, features=feats)
    xs = np.array([f["mean"]["x"] for f in feats])
    for k, r in enumerate(t.system_rows("mean")):
        train = np.delete(xs, k)
        tr_scores = train - train.mean()
        assert r.raw == pytest.approx(xs[k] - train.mean())
        assert r.znormed == pytest.approx((r.raw - tr_scores.mean()) / tr_scores.std())


def test_constant_classifier_accuracy_is_prevalence():
    from cadence.evaluation import metrics_report
    m = manifest_of(10, ad_every=3)  # 4 AD of 10
    t = loso_run(m, [Constant()], CTX, features=feats_for(m, ("const",)), normalize=False)
    rep = metrics_report(t, {"const": 0.0})["systems"]["const"]
    assert rep["accuracy"] == pytest.approx(0.4)
    assert rep["counts"]["TP"] == 4 and rep["counts"]["FP"] == 6
    # z-normalizing constant training scores is an error, reported against the fold
    with pytest.raises(FoldError) as info:
        loso_run(m, [Constant()], CTX, features=feats_for(m, ("const",)))
    assert isinstance(info.value.cause, NumericError)
    assert info.value.fold == 0


def test_permutation_invariance():
    m = manifest_of(8)
    feats = feats_for(m)
    perm = Manifest(tuple(reversed(m.subjects)))
    a = loso_run(m, [FeatureMean()], CTX, features=feats)
    b = loso_run(perm, [FeatureMean()], CTX, features=feats)
    assert a.to_csv() == b.to_csv()


def test_real_systems_on_small_corpus(small_corpus):
    m = load_manifest(small_corpus)
    systems = [make_system("fluency"), make_system("linguistic")]
    ctx = build_context(m, systems, PipelineConfig())
    t = loso_run(m, systems, ctx)
    assert set(t.systems) == {"fluency", "linguistic", "fusion_I", "fusion_II"}
    for s in t.systems:
        assert len(t.system_rows(s)) == len(m.subjects)
        assert all(np.isfinite(r.znormed) for r in t.system_rows(s))
