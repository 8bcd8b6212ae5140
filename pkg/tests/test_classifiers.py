import math

import numpy as np
import pytest
from gradcheck import max_relative_error

from cadence.classifiers import (aggregate_window_scores, lda_score, lstm_predict_subject, train_lda, train_lstm,
                                 train_svm, svm_score)
from cadence.classifiers.lstm import LstmModel, init_lstm, loss_and_grads
from cadence.classifiers.svm import SvmModel, default_gamma, fit_platt, kkt_violation, platt_probability
from cadence.errors import TrainingError
from cadence.text_features import EmbeddingTable, pad_intervention


def test_svm_two_points():
    X = np.array([[-1.0], [1.0]])
    m = train_svm(X, [-1, 1])
    # max-margin hyperplane w = 1, b = 0 (both points are support vectors at margin 1)
    np.testing.assert_allclose(m.decision_function(X), [-1.0, 1.0], atol=1e-3)
    assert abs(m.decision_function([[0.0]])[0]) < 1e-3
    assert svm_score(m, [0.3]) > 0 > svm_score(m, [-0.3])


def test_svm_separable_and_box(rng):
    y = np.repeat([-1, 1], 10)
    X = rng.standard_normal((20, 3)) + 3 * y[:, None]
    for kernel in ("linear", "rbf"):
        m = train_svm(X, y, kernel=kernel, C=0.5)
        assert np.all(np.sign(m.decision_function(X)) == y)
        assert np.all((m.alpha >= -1e-12) & (m.alpha <= 0.5 + 1e-12))
        assert abs(np.sum(m.dual_coef)) < 1e-9


def test_svm_kkt_and_objective_oracle(rng):
    from scipy.optimize import minimize
    y = np.repeat([-1.0, 1.0], 15)
    X = rng.standard_normal((30, 2)) + y[:, None]
    C = 1.0
    m = train_svm(X, y, C=C, tol=1e-5, trace=True)
    K = X @ X.T
    Q = K * np.outer(y, y)
    alpha = np.zeros(30)
    idx = [int(np.flatnonzero((X == sv).all(axis=1))[0]) for sv in m.support_vectors]
    alpha[idx] = m.alpha
    assert kkt_violation(m, X, y, alpha) < 1e-3
    ref = minimize(lambda a: 0.5 * a @ Q @ a - a.sum(), np.zeros(30), jac=lambda a: Q @ a - 1,
                   bounds=[(0, C)] * 30, constraints={"type": "eq", "fun": lambda a: a @ y}, method="SLSQP")
    ours = alpha.sum() - 0.5 * alpha @ Q @ alpha
    assert ours >= -ref.fun - 1e-4


def test_svm_default_gamma(rng):
    X = rng.standard_normal((10, 4)) * 2
    assert default_gamma(X) == pytest.approx(1.0 / (4 * X.var()))
    assert default_gamma(np.ones((3, 2))) == pytest.approx(0.5)


def test_svm_errors():
    with pytest.raises(TrainingError):
        train_svm([[0.0], [1.0]], [1, 1])
    with pytest.raises(TrainingError):
        train_svm([[np.nan], [1.0]], [-1, 1])
    with pytest.raises(TrainingError):
        train_svm([[0.0], [1.0]], [0, 1])


def test_platt(rng):
    f = np.concatenate([rng.normal(-2, 1, 50), rng.normal(2, 1, 50)])
    y = np.repeat([-1, 1], 50)
    A, B = fit_platt(f, y)
    assert A < 0
    p = platt_probability(np.array([-5.0, 0.0, 5.0]), A, B)
    assert p[0] < 0.1 < 0.9 < p[2] and np.all(np.diff(p) > 0)


def test_svm_save_load(tmp_path, rng):
    y = np.repeat([-1, 1], 10)
    X = rng.standard_normal((20, 3)) + y[:, None]
    m = train_svm(X, y, kernel="rbf", probability=True)
    m.save(tmp_path / "m.bin")
    back = SvmModel.load(tmp_path / "m.bin")
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))


def test_lda_gaussians():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(0, 1, 100), rng.normal(10, 1, 100)])[:, None]
    y = np.repeat([0, 1], 100)
    s = train_lda(X, y)
    Xt = np.concatenate([rng.normal(0, 1, 500), rng.normal(10, 1, 500)])[:, None]
    yt = np.repeat([0, 1], 500)
    assert np.mean((s.score(Xt) > 0) == yt) > 0.99
    mid = (X[y == 0].mean() + X[y == 1].mean()) / 2
    assert lda_score(s, [mid]) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
def test_lda_scale_invariance(c, rng):
    y = np.repeat([0, 1], 40)
    X = rng.standard_normal((80, 3)) + y[:, None] * [1.0, 0.5, 0.0]
    s1, s2 = train_lda(X, y), train_lda(c * X, y)
    np.testing.assert_array_equal(np.sign(s1.score(X)), np.sign(s2.score(c * X)))


def test_lda_singular_and_errors():
    X = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 5.0], [0.0, 6.0]])
    s = train_lda(X, [0, 0, 1, 1])
    assert np.all(np.isfinite(s.w))
    with pytest.raises(TrainingError):
        train_lda(X, [1, 1, 1, 1])


@pytest.mark.parametrize("seed", range(5))
def test_lstm_gradients(seed):
    assert max_relative_error(seed) < 1e-4


def _toy_lstm_data(seed=0, n=50):
    rng = np.random.default_rng(seed)
    emb = np.vstack([rng.standard_normal((10, 8)), np.zeros((2, 8))])
    y = rng.integers(0, 2, n)
    ids = np.where(y[:, None] == 1, rng.integers(0, 5, (n, 12)), rng.integers(5, 10, (n, 12)))
    return emb, ids, np.ones((n, 12)), y


def test_lstm_loss_decreases_and_deterministic():
    emb, ids, mask, y = _toy_lstm_data()
    hist = []
    m1 = train_lstm(ids, mask, y, emb, epochs=10, lr=1e-2, seed=3, history=hist)
    assert hist[-1] < hist[0]
    m2 = train_lstm(ids, mask, y, emb, epochs=10, lr=1e-2, seed=3)
    for name, v in m1.params().items():
        np.testing.assert_array_equal(v, m2.params()[name], err_msg=name)


def test_lstm_errors():
    emb, ids, mask, y = _toy_lstm_data()
    with pytest.raises(TrainingError):
        train_lstm(ids, mask, np.ones_like(y), emb)
    with pytest.raises(TrainingError):
        train_lstm(ids[:0], mask[:0], y[:0], emb)


def test_lstm_predict_subject():
    table = EmbeddingTable({"a": 0, "b": 1}, np.ones((2, 50)))
    base = init_lstm(table.lookup_matrix(), seed=0)
    p = base.params()
    zero = base.with_params({k: np.zeros_like(v) for k, v in p.items()})
    pads = [pad_intervention(["a", "b"], table), pad_intervention([], table), pad_intervention(["b"], table)]
    assert lstm_predict_subject(zero, pads) == 0.5
    fixed = base.with_params({**{k: np.zeros_like(v) for k, v in p.items()}, "c": np.array(math.log(4.0))})
    assert lstm_predict_subject(fixed, pads[:1]) == pytest.approx(0.8)

    class Stub:
        def predict(self, ids, mask):
            return np.array([0.2, 0.6])
    assert lstm_predict_subject(Stub(), [pads[0], pads[2]]) == pytest.approx(0.4)
    with pytest.raises(TrainingError):
        lstm_predict_subject(zero, [pads[1]])


def test_lstm_save_load(tmp_path):
    emb, ids, mask, y = _toy_lstm_data()
    m = train_lstm(ids, mask, y, emb, epochs=1, seed=1)
    m.save(tmp_path / "l.bin")
    np.testing.assert_array_equal(LstmModel.load(tmp_path / "l.bin").predict(ids, mask), m.predict(ids, mask))


def test_aggregate():
    assert aggregate_window_scores([1.0]) == 1.0
    assert aggregate_window_scores([-1.0, 1.0]) == 0.0
    w = [0.3, -1.2, 2.5, 0.1]
    assert aggregate_window_scores(w) == pytest.approx(sum(w) / 4)
    with pytest.raises(TrainingError):
        aggregate_window_scores([])
