"""Embedding -> LSTM(4) -> dense sigmoid classifier over padded interventions.

The embedding matrix is frozen. Training minimizes mean binary cross-entropy
with Adam; inverted dropout is applied elementwise to the embedding outputs
and to the final hidden state.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import _kernels
from ..errors import TrainingError
from ..serialize import load_model, save_model

HIDDEN = 4
PARAMS = ("W", "U", "b", "v", "c")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True, eq=False)
class LstmModel:
    embedding: np.ndarray  # (V + 2, E), frozen; last two rows are OOV and padding
    W: np.ndarray  # (4H, E)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)
    v: np.ndarray  # (H,)
    c: float
    dropout: float = 0.1

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def params(self) -> dict:
        return {"W": self.W, "U": self.U, "b": self.b, "v": self.v, "c": np.array(self.c)}

    def with_params(self, p: dict) -> "LstmModel":
        return replace(self, W=p["W"], U=p["U"], b=p["b"], v=p["v"], c=float(p["c"]))

    def predict(self, ids, mask) -> np.ndarray:
        """Per-intervention probabilities with dropout disabled."""
        ids = np.atleast_2d(ids)
        mask = np.atleast_2d(mask).astype(float)
        p, _ = forward(self, ids, mask)
        return p

    def save(self, path, meta=None) -> None:
        arrays = {"embedding": self.embedding, **self.params()}
        save_model(path, "lstm", arrays, {"hidden": self.hidden, "embed_dim": int(self.embedding.shape[1]),
                                          "dropout": self.dropout, **(meta or {})})

    @classmethod
    def load(cls, path) -> "LstmModel":
        _, a, meta = load_model(path, "lstm")
        return cls(a["embedding"], a["W"], a["U"], a["b"], a["v"], float(a["c"]), float(meta["dropout"]))


def init_lstm(embedding, hidden: int = HIDDEN, dropout: float = 0.1, seed=0) -> LstmModel:
    """Glorot-uniform input weights, orthogonal recurrent weights, forget bias 1."""
    rng = np.random.default_rng(seed)
    E = embedding.shape[1]
    lim = np.sqrt(6.0 / (E + 4 * hidden))
    W = rng.uniform(-lim, lim, size=(4 * hidden, E))
    U = np.vstack([_orthogonal(rng, hidden) for _ in range(4)])
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    lim_v = np.sqrt(6.0 / (hidden + 1))
    v = rng.uniform(-lim_v, lim_v, size=hidden)
    return LstmModel(np.asarray(embedding, dtype=float), W, U, b, v, 0.0, dropout)


def forward(model: LstmModel, ids, mask, drop_in=None, drop_out=None):
    """Probabilities and the cache needed by ``backward``."""
    X = model.embedding[ids]
    if drop_in is not None:
        X = X * drop_in
    M = np.ascontiguousarray(mask, dtype=float)
    X = np.ascontiguousarray(X)
    Hs, Cs, G = _kernels.lstm_forward(X, M, model.W, model.U, model.b)
    h = Hs[:, -1]
    if drop_out is not None:
        h = h * drop_out
    p = _sigmoid(h @ model.v + model.c)
    return p, (X, M, Hs, Cs, G, h, drop_out)


def bce(p, y, eps=1e-12) -> float:
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def loss_and_grads(model: LstmModel, ids, mask, y, drop_in=None, drop_out=None):
    """Mean BCE over the batch and its gradient for every trainable tensor.

    Passing fixed dropout masks makes the loss a deterministic function of
    the weights, which is what the finite-difference check relies on.
    """
    y = np.asarray(y, dtype=float)
    p, (X, M, Hs, Cs, G, h, dout) = forward(model, ids, mask, drop_in, drop_out)
    loss = bce(p, y)
    n = y.size
    dlogit = (p - y) / n
    dv = h.T @ dlogit
    dc = dlogit.sum()
    dh = dlogit[:, None] * model.v[None, :]
    if dout is not None:
        dh = dh * dout
    dW, dU, db = _kernels.lstm_backward(X, M, model.W, model.U, Hs, Cs, G, np.ascontiguousarray(dh))
    return loss, {"W": dW, "U": dU, "b": db, "v": dv, "c": np.array(dc)}


def train_lstm(ids, mask, labels, embedding, epochs: int = 10, batch: int = 16, lr: float = 1e-3,
               dropout: float = 0.1, seed=0, fold: int = 0, hidden: int = HIDDEN,
               betas=(0.9, 0.999), adam_eps: float = 1e-8, history: list | None = None) -> LstmModel:
    """Fit on intervention-level examples (one row of ``ids``/``mask`` each).

    Weight init draws from ``(seed, fold)``; epoch ``e`` draws shuffling and
    dropout masks from ``(seed, fold, e)``. Rows whose mask is all zero are
    dropped. ``history``, when given, receives the mean training loss
    (dropout disabled) before the first and after every epoch.
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask).astype(float)
    y = np.asarray(labels, dtype=float)
    keep = mask.any(axis=1)
    ids, mask, y = ids[keep], mask[keep], y[keep]
    if y.size == 0:
        raise TrainingError("LSTM training set is empty")
    if np.all(y == y[0]):
        raise TrainingError("LSTM training labels are all one class")
    model = init_lstm(embedding, hidden, dropout, seed=[int(seed), int(fold)])
    params = {k: np.array(v, dtype=float) for k, v in model.params().items()}
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2 = betas
    step = 0
    E = model.embedding.shape[1]
    T = ids.shape[1]
    if history is not None:
        history.append(bce(model.predict(ids, mask), y))
    for epoch in range(epochs):
        rng = np.random.default_rng([int(seed), int(fold), epoch])
        order = rng.permutation(y.size)
        for start in range(0, y.size, batch):
            sel = order[start:start + batch]
            keep_p = 1.0 - dropout
            if dropout > 0:
                d_in = (rng.random((sel.size, T, E)) < keep_p) / keep_p
                d_out = (rng.random((sel.size, hidden)) < keep_p) / keep_p
            else:
                d_in = d_out = None
            _, grads = loss_and_grads(model, ids[sel], mask[sel], y[sel], d_in, d_out)
            step += 1
            for k in PARAMS:
                g = grads[k]
                m1[k] = b1 * m1[k] + (1.0 - b1) * g
                m2[k] = b2 * m2[k] + (1.0 - b2) * g * g
                mhat = m1[k] / (1.0 - b1 ** step)
                vhat = m2[k] / (1.0 - b2 ** step)
                params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + adam_eps)
            model = model.with_params(params)
        if history is not None:
            history.append(bce(model.predict(ids, mask), y))
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise TrainingError("LSTM weights diverged to non-finite values")
    return model


def lstm_predict_subject(model: LstmModel, padded) -> float:
    """Mean intervention probability over the non-empty padded interventions."""
    rows = [p for p in padded if np.asarray(p.mask).any()]
    if not rows:
        raise TrainingError("subject has no non-empty interventions")
    ids = np.stack([p.token_ids for p in rows])
    mask = np.stack([p.mask for p in rows])
    return float(np.mean(model.predict(ids, mask)))


def aggregate_window_scores(scores) -> float:
    """Arithmetic mean of per-window scores."""
    s = np.asarray(list(scores), dtype=float)
    if s.size == 0:
        raise TrainingError("no window scores to aggregate")
    return float(s.mean())
