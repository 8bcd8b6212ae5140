"""Score normalization, fusion, classification metrics and ROC export."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, NumericError

METRICS_SCHEMA_VERSION = 1
FUSION_I = "fusion_I"
FUSION_II = "fusion_II"
SCORE_COLUMNS = ("subject_id", "system", "modality", "raw", "znormed", "fold", "label")


# ---------------------------------------------------------------- score table


@dataclass(frozen=True)
class ScoreRow:
    subject_id: str
    system: str
    modality: str  # "speech" | "text" | "fusion"
    raw: float
    znormed: float
    fold: int
    label: int  # 1 = AD


class ScoreTable:
    """Append-only collection of rows, at most one per (subject, system)."""

    def __init__(self, rows=()):
        self._rows: dict = {}
        for r in rows:
            self.add(r)

    def add(self, row: ScoreRow) -> None:
        key = (row.subject_id, row.system)
        if key in self._rows:
            raise DataError(f"duplicate score for subject {row.subject_id!r}, system {row.system!r}")
        self._rows[key] = row

    def extend(self, rows) -> None:
        for r in rows:
            self.add(r)

    @property
    def rows(self) -> list:
        return [self._rows[k] for k in sorted(self._rows)]

    @property
    def systems(self) -> list:
        return sorted({s for _, s in self._rows})

    @property
    def subjects(self) -> list:
        return sorted({s for s, _ in self._rows})

    def system_rows(self, system: str) -> list:
        return [r for r in self.rows if r.system == system]

    def modality(self, system: str) -> str:
        rows = self.system_rows(system)
        if not rows:
            raise DataError(f"no scores for system {system!r}")
        return rows[0].modality

    def __len__(self) -> int:
        return len(self._rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r in self.rows:
            w.writerow([r.subject_id, r.system, r.modality, repr(float(r.raw)), repr(float(r.znormed)),
                        r.fold, r.label])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScoreTable":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or tuple(reader.fieldnames) != SCORE_COLUMNS:
            raise DataError(f"scores file must have columns {','.join(SCORE_COLUMNS)}")
        return cls(ScoreRow(d["subject_id"], d["system"], d["modality"], float(d["raw"]), float(d["znormed"]),
                            int(d["fold"]), int(d["label"])) for d in reader)


# ---------------------------------------------------------------- z-norm


@dataclass(frozen=True)
class ZNorm:
    mean: float
    std: float

    def __call__(self, s):
        return (np.asarray(s, dtype=float) - self.mean) / self.std


def fit_znorm(train_scores, system: str = "?") -> ZNorm:
    """Mean and population standard deviation of a system's training scores."""
    s = np.asarray(train_scores, dtype=float)
    if s.size < 2:
        raise NumericError(f"z-norm for system {system!r} needs at least 2 training scores")
    sd = float(s.std())
    if not sd > 1e-12 * max(1.0, float(np.abs(s).max())):
        raise NumericError(f"z-norm for system {system!r}: training scores have zero spread")
    return ZNorm(float(s.mean()), sd)


def znorm(train_scores, scores, system: str = "?"):
    """Normalize ``scores`` with statistics of ``train_scores`` only."""
    return fit_znorm(train_scores, system)(scores)


# ---------------------------------------------------------------- fusion


def _by_subject(table: ScoreTable, systems=None) -> tuple[dict, dict]:
    systems = [s for s in (systems or table.systems) if table.modality(s) != "fusion"]
    per = {s: {r.subject_id: r.znormed for r in table.system_rows(s)} for s in systems}
    mods = {s: table.modality(s) for s in systems}
    subjects = sorted(set().union(*[set(v) for v in per.values()])) if per else []
    for s in systems:
        missing = [sid for sid in subjects if sid not in per[s]]
        if missing:
            raise DataError(f"system {s!r} has no score for subject {missing[0]!r}")
    return {sid: {s: per[s][sid] for s in systems} for sid in subjects}, mods


def fuse_I(table: ScoreTable, systems=None) -> dict:
    """Mean z-normed score over all systems, per subject."""
    scores, _ = _by_subject(table, systems)
    if not scores:
        raise DataError("nothing to fuse")
    return {sid: float(np.mean([v[s] for s in sorted(v)])) for sid, v in scores.items()}


def fuse_II(table: ScoreTable, systems=None) -> dict:
    """Mean of the per-modality means, per subject."""
    scores, mods = _by_subject(table, systems)
    if not scores:
        raise DataError("nothing to fuse")
    groups = sorted({m for m in mods.values()})
    out = {}
    for sid, v in scores.items():
        means = [np.mean([v[s] for s in sorted(v) if mods[s] == m]) for m in groups]
        out[sid] = float(np.mean(means))
    return out


def add_fusions(table: ScoreTable, systems=None) -> ScoreTable:
    """A copy of ``table`` plus Fusion I and Fusion II rows."""
    base = [r for r in table.rows if r.modality != "fusion"]
    out = ScoreTable(base)
    src = {r.subject_id: r for r in base}
    for name, fused in ((FUSION_I, fuse_I(table, systems)), (FUSION_II, fuse_II(table, systems))):
        for sid, val in fused.items():
            out.add(ScoreRow(sid, name, "fusion", val, val, src[sid].fold, src[sid].label))
    return out


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_decisions(cls, predicted, labels) -> "ConfusionCounts":
        p = np.asarray(predicted, dtype=bool)
        y = np.asarray(labels, dtype=bool)
        return cls(int(np.sum(p & y)), int(np.sum(p & ~y)), int(np.sum(~p & y)), int(np.sum(~p & ~y)))


def _ratio(a, b):
    return a / b if b else None


def _f1(p, r):
    if p is None or r is None or p + r == 0:
        return None
    return 2.0 * p * r / (p + r)


def compute_metrics(counts: ConfusionCounts) -> dict:
    """Per-class precision/recall/F1 (AD positive, and the swapped non-AD view) and accuracy.

    Ratios with a zero denominator are reported as ``None``.
    """
    if counts.n <= 0:
        raise DataError("metrics need at least one decision")
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    ad_p, ad_r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    non_p, non_r = _ratio(tn, tn + fn), _ratio(tn, tn + fp)
    return {
        "AD": {"precision": ad_p, "recall": ad_r, "f1": _f1(ad_p, ad_r)},
        "nonAD": {"precision": non_p, "recall": non_r, "f1": _f1(non_p, non_r)},
        "accuracy": (tp + tn) / counts.n,
    }


def roc_auc(scores, labels):
    """Mann-Whitney AUC (ties count half) and the ROC points.

    Points are ``(fpr, tpr, threshold)`` rows starting at (0, 0, +inf) with
    one row per distinct score, in decreasing threshold order.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    n1 = int(y.sum())
    n0 = int(y.size - n1)
    if n1 == 0 or n0 == 0:
        raise DataError("ROC needs both classes")
    ranks = rankdata(s)
    auc = (float(ranks[y].sum()) - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    distinct = np.r_[np.nonzero(np.diff(s_sorted))[0], s.size - 1]
    tps = np.cumsum(y_sorted)[distinct]
    fps = (distinct + 1) - tps
    pts = np.column_stack([np.r_[0.0, fps / n0], np.r_[0.0, tps / n1], np.r_[np.inf, s_sorted[distinct]]])
    return auc, pts


def trapezoid_area(points) -> float:
    p = np.asarray(points, dtype=float)
    return float(np.sum(np.diff(p[:, 0]) * (p[1:, 1] + p[:-1, 1]) / 2.0))


# ---------------------------------------------------------------- reports


def decision_threshold(system: str, thresholds: dict | None = None) -> float:
    if thresholds and system in thresholds:
        return float(thresholds[system])
    return 0.0


def system_report(rows, threshold: float, use_znormed: bool = False) -> dict:
    vals = np.array([r.znormed if use_znormed else r.raw for r in rows])
    labels = np.array([r.label for r in rows], dtype=bool)
    counts = ConfusionCounts.from_decisions(vals > threshold, labels)
    out = {"threshold": threshold, "n": counts.n,
           "counts": {"TP": counts.tp, "FP": counts.fp, "FN": counts.fn, "TN": counts.tn},
           **compute_metrics(counts)}
    if labels.all() or not labels.any():
        out["auc"] = None
    else:
        out["auc"] = roc_auc(vals, labels)[0]
    return out


def metrics_report(table: ScoreTable, thresholds: dict | None = None) -> dict:
    """Per-system and fusion metric blocks; fusions are thresholded on the z scale."""
    systems = {}
    for s in table.systems:
        rows = table.system_rows(s)
        systems[s] = {"modality": rows[0].modality,
                      **system_report(rows, decision_threshold(s, thresholds))}
    return {"schema_version": METRICS_SCHEMA_VERSION, "n_subjects": len(table.subjects), "systems": systems}


def _clean_json(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean_json(obj.item())
    return obj


def dumps_metrics(report: dict) -> str:
    return json.dumps(_clean_json(report), indent=2, sort_keys=True) + "\n"


def roc_csv(points) -> str:
    lines = ["fpr,tpr,threshold"]
    for fpr, tpr, thr in points:
        lines.append(f"{float(fpr)!r},{float(tpr)!r},{'inf' if math.isinf(thr) else repr(float(thr))}")
    return "\n".join(lines) + "\n"


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f", "#e377c2")


def roc_svg(curves: dict, size: int = 420) -> str:
    """Standalone SVG with one polyline per system and a chance diagonal."""
    pad = 50
    plot = size - 2 * pad

    def xy(fpr, tpr):
        return f"{pad + fpr * plot:.2f},{pad + (1.0 - tpr) * plot:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 170}" height="{size}" '
        f'viewBox="0 0 {size + 170} {size}" font-family="sans-serif" font-size="12">',
        f'<rect x="{pad}" y="{pad}" width="{plot}" height="{plot}" fill="none" stroke="#000"/>',
        f'<line x1="{pad}" y1="{pad + plot}" x2="{pad + plot}" y2="{pad}" stroke="#aaa" stroke-dasharray="4 4"/>',
    ]
    for k in range(6):
        v = k / 5
        parts.append(f'<text x="{pad + v * plot:.1f}" y="{pad + plot + 16}" text-anchor="middle">{v:.1f}</text>')
        parts.append(f'<text x="{pad - 6}" y="{pad + (1 - v) * plot + 4:.1f}" text-anchor="end">{v:.1f}</text>')
    parts.append(f'<text x="{pad + plot / 2}" y="{size - 10}" text-anchor="middle">False positive rate</text>')
    parts.append(f'<text x="14" y="{pad + plot / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {pad + plot / 2})">True positive rate</text>')
    for i, (name, (auc, pts)) in enumerate(sorted(curves.items())):
        color = _COLORS[i % len(_COLORS)]
        poly = " ".join(xy(p[0], p[1]) for p in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{poly}"/>')
        y = pad + 14 + 18 * i
        parts.append(f'<line x1="{size + 5}" y1="{y - 4}" x2="{size + 25}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{size + 30}" y="{y}">{name} ({auc:.3f})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_reports(table: ScoreTable, out_dir, thresholds: dict | None = None) -> dict:
    """scores.csv, metrics.json, roc_<system>.csv and roc_all.svg under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scores.csv").write_text(table.to_csv())
    report = metrics_report(table, thresholds)
    (out / "metrics.json").write_text(dumps_metrics(report))
    curves = {}
    for s in table.systems:
        rows = table.system_rows(s)
        labels = [r.label for r in rows]
        if len(set(labels)) < 2:
            continue
        auc, pts = roc_auc([r.raw for r in rows], labels)
        (out / f"roc_{s}.csv").write_text(roc_csv(pts))
        curves[s] = (auc, pts)
    if curves:
        (out / "roc_all.svg").write_text(roc_svg(curves))
    return report
