# cython: language_level=3
"""Compiled masked LSTM recurrence; mirrors cadence._kernels.lstm_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    return 0.5 * (1.0 + tanh(0.5 * z))


def lstm_forward(X, M, W, U, b):
    cdef double[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] m = np.ascontiguousarray(M, dtype=np.float64)
    cdef double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[::1] bias = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], E = x.shape[2], H = u.shape[1]
    # the input projection has no recurrence, so it goes to BLAS in one call
    cdef double[:, :, ::1] xw = np.ascontiguousarray(np.asarray(x) @ np.asarray(w).T + np.asarray(bias))
    Hs_arr = np.zeros((B, T + 1, H))
    Cs_arr = np.zeros((B, T + 1, H))
    G_arr = np.empty((B, T, 4 * H))
    cdef double[:, :, ::1] hs = Hs_arr
    cdef double[:, :, ::1] cs = Cs_arr
    cdef double[:, :, ::1] g = G_arr
    z_arr = np.empty(4 * H)
    cdef double[::1] z = z_arr
    cdef Py_ssize_t n, t, k, e, q
    cdef double acc, mk, gi, gf, gg, go, c_new, h_new
    with nogil:
        for n in range(B):
            for t in range(T):
                mk = m[n, t]
                for k in range(4 * H):
                    acc = xw[n, t, k]
                    for q in range(H):
                        acc = acc + u[k, q] * hs[n, t, q]
                    z[k] = acc
                for k in range(H):
                    gi = _sigmoid(z[k])
                    gf = _sigmoid(z[H + k])
                    gg = tanh(z[2 * H + k])
                    go = _sigmoid(z[3 * H + k])
                    c_new = gf * cs[n, t, k] + gi * gg
                    h_new = go * tanh(c_new)
                    cs[n, t + 1, k] = mk * c_new + (1.0 - mk) * cs[n, t, k]
                    hs[n, t + 1, k] = mk * h_new + (1.0 - mk) * hs[n, t, k]
                    g[n, t, k] = gi
                    g[n, t, H + k] = gf
                    g[n, t, 2 * H + k] = gg
                    g[n, t, 3 * H + k] = go
    return Hs_arr, Cs_arr, G_arr


def lstm_backward(X, M, W, U, Hs, Cs, G, dh_last):
    cdef double[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] m = np.ascontiguousarray(M, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, :, ::1] hs = np.ascontiguousarray(Hs, dtype=np.float64)
    cdef double[:, :, ::1] cs = np.ascontiguousarray(Cs, dtype=np.float64)
    cdef double[:, :, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], E = x.shape[2], H = u.shape[1]
    dW_arr = np.zeros((4 * H, E))
    dU_arr = np.zeros((4 * H, H))
    db_arr = np.zeros(4 * H)
    cdef double[:, ::1] dW = dW_arr
    cdef double[:, ::1] dU = dU_arr
    cdef double[::1] db = db_arr
    dh_arr = np.array(dh_last, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] dh = dh_arr
    cdef double[::1] dc = np.zeros(H)
    cdef double[::1] dz = np.zeros(4 * H)
    cdef double[::1] dh_next = np.zeros(H)
    cdef Py_ssize_t n, t, k, e, q
    cdef double mk, gi, gf, gg, go, tc, dhn, dcn, acc
    with nogil:
        for n in range(B):
            for k in range(H):
                dc[k] = 0.0
            for t in range(T - 1, -1, -1):
                mk = m[n, t]
                for k in range(H):
                    gi = g[n, t, k]
                    gf = g[n, t, H + k]
                    gg = g[n, t, 2 * H + k]
                    go = g[n, t, 3 * H + k]
                    tc = tanh(cs[n, t + 1, k])
                    dhn = mk * dh[n, k]
                    dcn = mk * dc[k] + dhn * go * (1.0 - tc * tc)
                    dz[k] = dcn * gg * gi * (1.0 - gi)
                    dz[H + k] = dcn * cs[n, t, k] * gf * (1.0 - gf)
                    dz[2 * H + k] = dcn * gi * (1.0 - gg * gg)
                    dz[3 * H + k] = dhn * tc * go * (1.0 - go)
                    dc[k] = dcn * gf + (1.0 - mk) * dc[k]
                for k in range(4 * H):
                    if dz[k] == 0.0:
                        continue
                    for e in range(E):
                        dW[k, e] += dz[k] * x[n, t, e]
                    for q in range(H):
                        dU[k, q] += dz[k] * hs[n, t, q]
                    db[k] += dz[k]
                for q in range(H):
                    acc = (1.0 - mk) * dh[n, q]
                    for k in range(4 * H):
                        acc = acc + dz[k] * u[k, q]
                    dh_next[q] = acc
                for q in range(H):
                    dh[n, q] = dh_next[q]
    return dW_arr, dU_arr, db_arr
