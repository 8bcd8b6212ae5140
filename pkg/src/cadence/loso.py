"""Leave-one-subject-out driver.

Subjects are ordered by id and fold ``k`` holds out the ``k``-th subject.
Each fold fits every trainable stage on the remaining subjects, scores the
held-out subject, and z-normalizes that score with statistics of the fold
model's scores on its own training subjects. Folds are independent, so the
result does not depend on how many worker processes run them.
"""
from __future__ import annotations

import logging
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .corpus import Manifest
from .errors import CadenceError, DataError, FoldError
from .evaluation import ScoreRow, ScoreTable, add_fusions, fit_znorm
from .pipelines import Context, extract_subject

log = logging.getLogger(__name__)

# Worker state, installed before forking so children inherit it.
_STATE: dict = {}


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items)), mp_context=mp.get_context("fork")) as pool:
        return list(pool.map(fn, items))


def _extract_one(i):
    st = _STATE
    subject = st["subjects"][i]
    try:
        return extract_subject(subject, st["systems"], st["ctx"])
    except CadenceError:
        raise
    except Exception as exc:  # numpy/scipy failures on odd inputs
        raise DataError(f"feature extraction failed for subject {subject.id!r}: {exc}") from exc


def run_fold(k: int, subjects, labels, features, systems, ctx: Context, normalize: bool = True) -> list:
    """Score rows for the subject held out in fold ``k``.

    With ``normalize`` off the z-normed column is NaN, which lets degenerate
    systems (constant training scores) be evaluated on raw decisions.
    """
    train = [i for i in range(len(subjects)) if i != k]
    y_train = labels[train]
    rows = []
    for s in systems:
        feats = [features[i][s.name] for i in train]
        model = s.fit(feats, y_train, k, ctx)
        raw = float(s.score(model, features[k][s.name]))
        if normalize:
            train_raw = [s.score(model, f) for f in feats]
            z = float(fit_znorm(train_raw, s.name)(raw))
        else:
            z = float("nan")
        rows.append(ScoreRow(subjects[k].id, s.name, s.modality, raw, z, k, int(labels[k])))
    return rows


def _fold_one(k):
    st = _STATE
    try:
        return run_fold(k, st["subjects"], st["labels"], st["features"], st["systems"], st["ctx"],
                        st["normalize"])
    except Exception as exc:
        raise FoldError(k, st["subjects"][k].id, exc) from exc


def extract_all(manifest: Manifest, systems, ctx: Context, jobs: int = 1) -> list:
    subjects = list(manifest.sorted().subjects)
    _STATE.update(subjects=subjects, systems=systems, ctx=ctx)
    try:
        return _map(_extract_one, range(len(subjects)), jobs)
    finally:
        _STATE.clear()


def loso_run(manifest: Manifest, systems, ctx: Context, jobs: int = 1, features=None,
             fuse: bool = True, normalize: bool = True) -> ScoreTable:
    """Score every subject with every system under LOSO; optionally add the fusions.

    Fusion needs z-normed scores, so it is skipped when ``normalize`` is off.
    """
    subjects = list(manifest.sorted().subjects)
    if len(subjects) < 3:
        raise DataError("LOSO needs at least 3 subjects")
    labels = np.array([1 if s.is_ad else 0 for s in subjects])
    if features is None:
        log.info("extracting features for %d subjects", len(subjects))
        features = extract_all(manifest, systems, ctx, jobs)
    log.info("running %d folds with %d job(s)", len(subjects), jobs)
    _STATE.update(subjects=subjects, labels=labels, features=features, systems=systems, ctx=ctx,
                  normalize=normalize)
    try:
        per_fold = _map(_fold_one, range(len(subjects)), jobs)
    finally:
        _STATE.clear()
    table = ScoreTable(r for rows in per_fold for r in rows)
    if fuse and normalize and len(systems) > 1:
        table = add_fusions(table)
    return table


def thresholds_for(systems) -> dict:
    return {s.name: s.threshold for s in systems}
