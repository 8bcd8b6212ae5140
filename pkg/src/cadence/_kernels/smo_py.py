"""Numpy reference implementation of the SMO dual solver.

Same contract as the compiled ``_smo.smo_solve``; used when the extension is
not built or ``CADENCE_PURE_PYTHON=1``.
"""
import numpy as np

TAU = 1e-12


def smo_solve(K, y, C, tol=1e-3, max_iter=100000, trace=False):
    """Solve the C-SVM dual on a precomputed kernel matrix.

    Working-set selection uses second-order information (the LIBSVM WSS
    rule). Returns ``(alpha, bias, n_iter, objective)`` where ``objective``
    holds the dual objective after every update when ``trace`` is set, and
    is empty otherwise.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    objective = []

    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        minus_yg = -y * grad
        if not up.any() or not low.any():
            break
        cand = np.where(up, minus_yg, -np.inf)
        i = int(np.argmax(cand))
        g_max = cand[i]
        g_min = np.min(np.where(low, minus_yg, np.inf))
        if g_max - g_min < tol:
            break

        b = g_max - minus_yg
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        score = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        if not np.isfinite(score[j]):
            break

        ai_old, aj_old = alpha[i], alpha[j]
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = TAU
        if y[i] != y[j]:
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
        d_i = ai - ai_old
        d_j = aj - aj_old
        # Q[:, k] = y * y[k] * K[:, k]
        grad += y * (y[i] * d_i * K[i] + y[j] * d_j * K[j])
        it += 1
        if trace:
            objective.append(-0.5 * float(alpha @ (grad - 1.0)))

    bias = -_rho(alpha, grad, y, C)
    return alpha, bias, it, np.asarray(objective)


def _rho(alpha, grad, y, C):
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
