"""The nine acceptance criteria, each a single test that records a PASS/FAIL line."""
import itertools
import json
import time

import numpy as np
import pytest
from chat_fixtures import FIXTURES, MALFORMED
from conftest import record_acceptance
from gradcheck import max_relative_error
from published_results import PUBLISHED, reconstructed

from cadence.chat import extract_interventions, parse_chat
from cadence.cli import main
from cadence.corpus import load_manifest
from cadence.embeddings import (TdnnModel, TvModel, Ubm, XvectorExtractor, accumulate_bw_stats, extract_ivector,
                                ivector_posterior, lda_project_and_norm, train_lda_basis, train_tv, train_ubm,
                                windowed_embeddings)
from cadence.errors import ChatParseError
from cadence.evaluation import ConfusionCounts, ScoreRow, ScoreTable, fuse_I, fuse_II, metrics_report, roc_auc, \
    trapezoid_area
from cadence.loso import loso_run, thresholds_for
from cadence.pipelines import DESK_OVERRIDES, SYSTEMS, PipelineConfig, build_context, make_system
from cadence.synth import generate_synthetic_corpus


def test_criterion_1_published_metrics():
    t0 = time.perf_counter()
    worst = 0.0
    ok = True
    for name, (counts, printed) in PUBLISHED.items():
        # counts implied by the printed per-class recalls over 24 AD and 24 non-AD test subjects
        rec_non, rec_ad = printed[1], printed[4]
        tp, tn = round(rec_ad * 24), round(rec_non * 24)
        derived = (tp, 24 - tn, 24 - tp, tn)
        ok &= derived == counts
        worst = max(worst, max(abs(a - b) for a, b in zip(reconstructed(derived), printed)))
    elapsed = time.perf_counter() - t0
    passed = ok and worst <= 5e-4 and elapsed < 1.0
    record_acceptance(1, passed, f"5 rows, max |diff| {worst:.2e} (tol 5e-4), {elapsed:.3f} s")
    assert passed


def test_criterion_2_lstm_gradient_check():
    t0 = time.perf_counter()
    errs = [max_relative_error(seed, eps=1e-5) for seed in range(5)]
    elapsed = time.perf_counter() - t0
    passed = max(errs) < 1e-4 and elapsed < 30
    record_acceptance(2, passed, f"5 seeds, max rel. error {max(errs):.2e} (tol 1e-4), {elapsed:.2f} s")
    assert passed


def test_criterion_3_em_monotone_and_recovery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    centers = np.array([[-2.0, 1.0, 0.0], [2.5, -1.0, 1.5]])
    X = np.vstack([rng.normal(c, 0.6, size=(1000, 3)) for c in centers])
    ubm = train_ubm(X, 2, n_iters=20, seed=0)
    h = np.array(ubm.llk_history)
    drops = np.diff(h) / np.abs(h[:-1])
    order = np.argsort(ubm.means[:, 0])
    err = float(np.max(np.abs(ubm.means[order] - centers)))
    elapsed = time.perf_counter() - t0
    passed = len(h) == 21 and drops.min() >= -1e-8 and err <= 0.1 and elapsed < 10
    record_acceptance(3, passed, f"2000 frames, 20 iters, min rel. step {drops.min():.2e}, "
                                 f"mean error {err:.3f} (tol 0.1), {elapsed:.2f} s")
    assert passed


def test_criterion_4_ivector_closed_form_and_norms():
    worst = 0.0
    for t, s, N, F in [(0.7, 2.0, 13.0, 4.2), (-1.5, 0.3, 2.5, -0.8), (3.0, 1.0, 100.0, 7.0), (0.01, 5.0, 0.5, 2.0)]:
        ubm = Ubm(np.array([1.0]), np.array([[0.0]]), np.array([[s]]))
        mean, _, _, _ = ivector_posterior(np.array([[[t]]]), ubm.variances, np.array([N]), np.array([[F]]))
        worst = max(worst, abs(mean[0] - (t * F / s) / (1.0 + N * t * t / s)))
    rng = np.random.default_rng(4)
    ubm = train_ubm(rng.standard_normal((600, 4)), 4, n_iters=4)
    stats = [accumulate_bw_stats(ubm, rng.standard_normal((50, 4)) + rng.normal(0, 1, 4)) for _ in range(10)]
    tv = train_tv(stats, ubm, dim=5, n_iters=3)
    norms = [np.linalg.norm(extract_ivector(tv, ubm, st).vector) for st in stats]
    from cadence.corpus import Recording
    x = Recording(rng.uniform(-0.3, 0.3, 16000 * 7), 16000)
    tdnn = TdnnModel.random(0, dims=(16, 16, 16, 16, 24), embed_dim=12)
    raw = windowed_embeddings(x, XvectorExtractor(tdnn))
    basis = train_lda_basis(np.vstack([e.vector for e in raw] * 2) + rng.normal(0, 0.1, (2 * len(raw), 12)),
                            [0] * len(raw) + [1] * len(raw), n_dims=6)
    norms += [np.linalg.norm(lda_project_and_norm(basis, e).vector) for e in raw]
    norm_err = max(abs(n - 1.0) for n in norms)
    passed = worst <= 1e-9 and norm_err <= 1e-6
    record_acceptance(4, passed, f"closed-form |diff| {worst:.1e} (tol 1e-9), "
                                 f"{len(norms)} embeddings, max |norm-1| {norm_err:.1e} (tol 1e-6)")
    assert passed


def _brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    return sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg)) / (len(pos) * len(neg))


def test_criterion_5_auc_oracle():
    rng = np.random.default_rng(55)
    exact = 0
    worst = 0.0
    for i in range(200):
        n = int(rng.integers(4, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        # half the sets use coarse integer scores so ties are exercised
        scores = rng.integers(0, 6, n).astype(float) if i % 2 else rng.standard_normal(n)
        auc, pts = roc_auc(scores, labels)
        exact += auc == _brute_auc(scores, labels)
        worst = max(worst, abs(trapezoid_area(pts) - auc))
    passed = exact == 200 and worst <= 1e-12
    record_acceptance(5, passed, f"{exact}/200 exact matches, max trapezoid |diff| {worst:.1e} (tol 1e-12)")
    assert passed


def test_criterion_6_fusion_algebra():
    rng = np.random.default_rng(6)
    rows = []
    for i in range(50):
        sp, tx = rng.normal(0, 100, 2)
        rows += [ScoreRow(f"S{i}", "sp", "speech", sp, sp, i, i % 2), ScoreRow(f"S{i}", "tx", "text", tx, tx, i, i % 2)]
    t = ScoreTable(rows)
    f1, f2 = fuse_I(t), fuse_II(t)
    worst = max(abs(f1[s] - f2[s]) for s in f1)
    fix = ScoreTable([ScoreRow("S1", n, "speech", 1.0, 1.0, 0, 1) for n in ("a", "b", "c")]
                     + [ScoreRow("S1", "t", "text", -3.0, -3.0, 0, 1)])
    a, b = fuse_I(fix)["S1"], fuse_II(fix)["S1"]
    passed = worst <= 1e-12 and a == 0.0 and b == -1.0
    record_acceptance(6, passed, f"1+1 max |I-II| {worst:.1e} (tol 1e-12); fixture I={a}, II={b}")
    assert passed


def test_criterion_7_end_to_end_synthetic_loso(tmp_path):
    t0 = time.perf_counter()
    manifest = generate_synthetic_corpus(40, 7, tmp_path / "corpus")
    systems = [make_system(n) for n in SYSTEMS]
    ctx = build_context(manifest, systems, PipelineConfig(seed=7).with_(**DESK_OVERRIDES))
    table = loso_run(manifest, systems, ctx, jobs=1)
    rep = metrics_report(table, thresholds_for(systems))["systems"]
    elapsed = time.perf_counter() - t0
    acc_f, acc_l = rep["fluency"]["accuracy"], rep["linguistic"]["accuracy"]
    best_single = max(rep[s]["auc"] for s in SYSTEMS)
    auc_ii = rep["fusion_II"]["auc"]
    passed = acc_f >= 0.90 and acc_l >= 0.90 and auc_ii >= best_single - 0.02 and elapsed < 300
    summary = ", ".join(f"{s} {rep[s]['accuracy']:.3f}/{rep[s]['auc']:.3f}" for s in sorted(rep))
    record_acceptance(7, passed, f"accuracy fluency {acc_f:.3f}, linguistic {acc_l:.3f} (min 0.90); "
                                 f"Fusion II AUC {auc_ii:.3f} vs best single {best_single:.3f}; {elapsed:.0f} s")
    print("acc/auc per system:", summary)
    assert passed


def test_criterion_8_chat_fixtures():
    ok = 0
    for name, text, expected, kwargs in FIXTURES:
        ok += extract_interventions(parse_chat(text), **kwargs).interventions == expected
    located = 0
    for name, text, line in MALFORMED:
        try:
            parse_chat(text)
        except ChatParseError as exc:
            located += exc.line == line
    passed = len(FIXTURES) == 25 and ok == 25 and located == len(MALFORMED)
    record_acceptance(8, passed, f"{ok}/{len(FIXTURES)} fixtures exact, {located}/{len(MALFORMED)} malformed located")
    assert passed


def test_criterion_9_determinism_across_jobs(small_corpus, tmp_path, capsys):
    outs = []
    for i, jobs in enumerate((1, 2, 2)):
        out = tmp_path / f"run{i}"
        rc = main(["evaluate-loso", "--manifest", str(small_corpus), "--profile", "desk", "--seed", "3",
                   "--jobs", str(jobs), "--out-dir", str(out)])
        assert rc == 0
        outs.append(out)
    capsys.readouterr()
    same = all((o / f).read_bytes() == (outs[0] / f).read_bytes()
               for o in outs[1:] for f in ("scores.csv", "metrics.json"))
    n_sys = len(json.loads((outs[0] / "metrics.json").read_text())["systems"])
    passed = same
    record_acceptance(9, passed, f"scores.csv and metrics.json byte-identical for --jobs 1, 2, 2 ({n_sys} systems)")
    assert passed
