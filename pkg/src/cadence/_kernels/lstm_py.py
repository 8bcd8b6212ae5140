"""Numpy reference implementation of the masked LSTM recurrence.

Gate layout along the 4H axis is (input, forget, cell, output). A step whose
mask is 0 carries the previous state through unchanged.
"""
import numpy as np


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(X, M, W, U, b):
    """Run the recurrence over a batch.

    X is (B, T, E), M is (B, T). Returns ``(Hs, Cs, G)`` with Hs and Cs of
    shape (B, T+1, H) holding the zero initial state at index 0, and G of
    shape (B, T, 4H) holding post-activation gate values.
    """
    B, T, _ = X.shape
    H = U.shape[1]
    Hs = np.zeros((B, T + 1, H))
    Cs = np.zeros((B, T + 1, H))
    G = np.empty((B, T, 4 * H))
    xw = X @ W.T + b
    for t in range(T):
        h_prev = Hs[:, t]
        c_prev = Cs[:, t]
        z = xw[:, t] + h_prev @ U.T
        gi = _sigmoid(z[:, :H])
        gf = _sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        go = _sigmoid(z[:, 3 * H:])
        c_new = gf * c_prev + gi * gg
        h_new = go * np.tanh(c_new)
        m = M[:, t, None]
        Cs[:, t + 1] = m * c_new + (1.0 - m) * c_prev
        Hs[:, t + 1] = m * h_new + (1.0 - m) * h_prev
        G[:, t, :H] = gi
        G[:, t, H:2 * H] = gf
        G[:, t, 2 * H:3 * H] = gg
        G[:, t, 3 * H:] = go
    return Hs, Cs, G


def lstm_backward(X, M, W, U, Hs, Cs, G, dh_last):
    """Backpropagate a gradient on the final hidden state.

    Returns ``(dW, dU, db)``. Inputs are not differentiated (the embedding
    layer is frozen).
    """
    B, T, _ = X.shape
    H = U.shape[1]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        m = M[:, t, None]
        gi = G[:, t, :H]
        gf = G[:, t, H:2 * H]
        gg = G[:, t, 2 * H:3 * H]
        go = G[:, t, 3 * H:]
        c_t = Cs[:, t + 1]
        c_prev = Cs[:, t]
        h_prev = Hs[:, t]
        tc = np.tanh(c_t)
        dh_new = m * dh
        dc_new = m * dc + dh_new * go * (1.0 - tc * tc)
        dz = np.empty((B, 4 * H))
        dz[:, :H] = dc_new * gg * gi * (1.0 - gi)
        dz[:, H:2 * H] = dc_new * c_prev * gf * (1.0 - gf)
        dz[:, 2 * H:3 * H] = dc_new * gi * (1.0 - gg * gg)
        dz[:, 3 * H:] = dh_new * tc * go * (1.0 - go)
        dW += dz.T @ X[:, t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = dz @ U + (1.0 - m) * dh
        dc = dc_new * gf + (1.0 - m) * dc
    return dW, dU, db
