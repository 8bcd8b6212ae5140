# cython: language_level=3
"""Compiled SMO dual solver; mirrors cadence._kernels.smo_py.smo_solve."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

cdef double TAU = 1e-12


def smo_solve(K, y, double C, double tol=1e-3, long max_iter=100000, bint trace=False):
    cdef double[:, ::1] Km = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    alpha_arr = np.zeros(n)
    grad_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr
    cdef Py_ssize_t t, i, j
    cdef long it = 0
    cdef double g_max, g_min, myg, b, a, score, best
    cdef double ai_old, aj_old, ai, aj, quad, delta, diff, total, d_i, d_j, obj
    cdef bint in_up, in_low
    objective = []

    while it < max_iter:
        g_max = -INFINITY
        g_min = INFINITY
        i = -1
        for t in range(n):
            myg = -yv[t] * grad[t]
            if yv[t] > 0:
                in_up = alpha[t] < C
                in_low = alpha[t] > 0
            else:
                in_up = alpha[t] > 0
                in_low = alpha[t] < C
            if in_up and myg > g_max:
                g_max = myg
                i = t
            if in_low and myg < g_min:
                g_min = myg
        if i < 0 or g_max - g_min < tol:
            break
        j = -1
        best = INFINITY
        for t in range(n):
            if yv[t] > 0:
                in_low = alpha[t] > 0
            else:
                in_low = alpha[t] < C
            if not in_low:
                continue
            b = g_max + yv[t] * grad[t]
            if b > 0:
                a = Km[i, i] + Km[t, t] - 2.0 * Km[i, t]
                if a <= 0:
                    a = TAU
                score = -(b * b) / a
                if score < best:
                    best = score
                    j = t
        if j < 0:
            break

        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = Km[i, i] + Km[j, j] - 2.0 * Km[i, j]
        if quad <= 0:
            quad = TAU
        if yv[i] != yv[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        d_i = (ai - ai_old) * yv[i]
        d_j = (aj - aj_old) * yv[j]
        for t in range(n):
            grad[t] += yv[t] * (d_i * Km[i, t] + d_j * Km[j, t])
        it += 1
        if trace:
            obj = 0.0
            for t in range(n):
                obj += alpha[t] * (grad[t] - 1.0)
            objective.append(-0.5 * obj)

    bias = -_rho(alpha_arr, grad_arr, np.asarray(yv), C)
    return alpha_arr, bias, it, np.asarray(objective, dtype=np.float64)


def _rho(alpha, grad, y, double C):
    yg = y * grad
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yg[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        ub = lb
    if not np.isfinite(lb):
        lb = ub
    return float((ub + lb) / 2.0)
