"""Two-class Fisher discriminant used as a one-dimensional scorer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError
from ..serialize import load_model, save_model


@dataclass(frozen=True, eq=False)
class LdaScorer:
    w: np.ndarray
    threshold: float

    def score(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w - self.threshold

    def save(self, path, meta=None) -> None:
        save_model(path, "lda_scorer", {"w": self.w}, {"threshold": self.threshold, **(meta or {})})

    @classmethod
    def load(cls, path) -> "LdaScorer":
        _, a, meta = load_model(path, "lda_scorer")
        return cls(a["w"], float(meta["threshold"]))


def train_lda(X, y, ridge: float = 1e-6) -> LdaScorer:
    """w = Sw^-1 (mu_pos - mu_neg); threshold at the midpoint of the projected means.

    ``y`` is boolean-like (truthy = positive class). A singular within-class
    scatter gets ``ridge * trace(Sw)`` added to its diagonal.
    """
    X = np.asarray(X, dtype=float)
    pos = np.asarray(y).astype(bool)
    if pos.all() or not pos.any():
        raise TrainingError("LDA needs both classes in the training set")
    mu1 = X[pos].mean(axis=0)
    mu0 = X[~pos].mean(axis=0)
    d1 = X[pos] - mu1
    d0 = X[~pos] - mu0
    Sw = d1.T @ d1 + d0.T @ d0
    d = X.shape[1]
    if np.linalg.matrix_rank(Sw) < d:
        tr = float(np.trace(Sw))
        Sw = Sw + ridge * (tr if tr > 0 else 1.0) * np.eye(d)
    w = np.linalg.solve(Sw, mu1 - mu0)
    if not np.any(w):
        raise TrainingError("LDA projection vanished (identical class means)")
    threshold = 0.5 * float(w @ mu1 + w @ mu0)
    return LdaScorer(w, threshold)


def lda_score(scorer: LdaScorer, x):
    out = scorer.score(np.atleast_2d(x))
    return out if out.size > 1 else float(out[0])
