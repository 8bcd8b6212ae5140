"""C-SVM trained by SMO on a precomputed kernel, with optional Platt scaling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .. import _kernels
from ..errors import TrainingError
from ..serialize import load_model, save_model


def linear_kernel(A, B):
    return np.asarray(A, dtype=float) @ np.asarray(B, dtype=float).T


def rbf_kernel(A, B, gamma):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


def default_gamma(X) -> float:
    """1 / (n_features * var(X)), falling back to 1 / n_features for constant data."""
    X = np.asarray(X, dtype=float)
    v = float(X.var())
    return 1.0 / (X.shape[1] * v) if v > 0 else 1.0 / X.shape[1]


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: str
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for each support vector
    alpha: np.ndarray  # alpha_i, in [0, C]
    bias: float
    C: float
    gamma: float | None = None
    platt: tuple | None = None  # (A, B): P(y=1|f) = 1 / (1 + exp(A f + B))
    n_iter: int = 0
    objective: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def gram(self, X) -> np.ndarray:
        if self.kernel == "linear":
            return linear_kernel(X, self.support_vectors)
        return rbf_kernel(X, self.support_vectors, self.gamma)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return self.gram(X) @ self.dual_coef + self.bias

    def predict_proba(self, X) -> np.ndarray:
        if self.platt is None:
            raise TrainingError("model was trained without probability calibration")
        return platt_probability(self.decision_function(X), *self.platt)

    def save(self, path, meta=None) -> None:
        save_model(path, f"svm_{self.kernel}",
                   {"support_vectors": self.support_vectors, "dual_coef": self.dual_coef, "alpha": self.alpha},
                   {"bias": self.bias, "C": self.C, "gamma": self.gamma,
                    "platt": list(self.platt) if self.platt else None, **(meta or {})})

    @classmethod
    def load(cls, path) -> "SvmModel":
        kind, a, meta = load_model(path)
        return cls(kind.split("_", 1)[1], a["support_vectors"], a["dual_coef"], a["alpha"], meta["bias"],
                   meta["C"], meta["gamma"], tuple(meta["platt"]) if meta.get("platt") else None)


def train_svm(X, y, kernel: str = "linear", C: float = 1.0, gamma: float | None = None,
              tol: float = 1e-3, max_iter: int = 100000, probability: bool = False,
              trace: bool = False) -> SvmModel:
    """Fit a two-class soft-margin SVM; labels must be -1/+1."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise TrainingError("non-finite feature value in SVM training data")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise TrainingError("SVM labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise TrainingError("SVM training set contains a single class")
    if kernel == "linear":
        K = linear_kernel(X, X)
        gamma = None
    elif kernel == "rbf":
        gamma = default_gamma(X) if gamma is None else float(gamma)
        K = rbf_kernel(X, X, gamma)
    else:
        raise TrainingError(f"unknown kernel {kernel!r}")
    alpha, bias, n_iter, objective = _kernels.smo_solve(K, y, float(C), float(tol), int(max_iter), bool(trace))
    sv = alpha > 0
    model = SvmModel(kernel, X[sv], alpha[sv] * y[sv], alpha[sv], float(bias), float(C), gamma,
                     None, int(n_iter), objective)
    if probability:
        f = K[:, sv] @ model.dual_coef + model.bias
        model = SvmModel(kernel, model.support_vectors, model.dual_coef, model.alpha, model.bias, model.C,
                         gamma, fit_platt(f, y), model.n_iter, objective)
    return model


def svm_score(model: SvmModel, x, probability: bool = False):
    """Signed margin, or calibrated P(class +1) when ``probability`` is set."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = model.predict_proba(x) if probability else model.decision_function(x)
    return out if out.size > 1 else float(out[0])


def kkt_violation(model: SvmModel, X, y, alpha_full) -> float:
    """Largest violation of the soft-margin KKT conditions on the training set."""
    y = np.asarray(y, dtype=float)
    m = y * model.decision_function(X)
    a = np.asarray(alpha_full)
    C = model.C
    v = np.where(a <= 0, np.maximum(0.0, 1.0 - m),
                 np.where(a >= C, np.maximum(0.0, m - 1.0), np.abs(m - 1.0)))
    return float(v.max())


def platt_probability(f, A, B):
    z = A * np.asarray(f, dtype=float) + B
    return np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(np.minimum(z, 700))))


def fit_platt(f, y):
    """Fit the sigmoid 1/(1+exp(A f + B)) with Platt's smoothed targets."""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    n_pos = float(np.sum(y > 0))
    n_neg = float(np.sum(y <= 0))
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(p):
        A, B = p
        z = A * f + B
        # -sum t log sigma(-z) + (1-t) log sigma(z), written stably
        return float(np.sum(np.logaddexp(0.0, z) - (1.0 - t) * z))

    def grad(p):
        A, B = p
        z = A * f + B
        s = 1.0 / (1.0 + np.exp(-z))  # P(y=-1 side)
        g = s - (1.0 - t)
        return np.array([np.sum(g * f), np.sum(g)])

    x0 = np.array([0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))])
    res = minimize(nll, x0, jac=grad, method="BFGS")
    return float(res.x[0]), float(res.x[1])
