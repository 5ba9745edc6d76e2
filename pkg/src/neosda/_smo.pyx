# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled SMO dual solver: the hot training loop.

Mirrors _smo_py.smo_solve operation for operation (same selection rule,
same update arithmetic, compiled with FP contraction off) so both backends
walk the same iterate path.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def smo_solve(object K_in, object y_in, double C, double tol, long max_iter):
    """Solve min 0.5*a'Qa - e'a s.t. 0 <= a <= C, y'a = 0, Q = yy' * K.

    Returns (alpha, bias, gap, n_iter).
    """
    K_arr = np.ascontiguousarray(K_in, dtype=np.float64)
    y_arr = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef double[:, ::1] K = K_arr
    cdef double[::1] y = y_arr
    cdef Py_ssize_t n = y.shape[0]

    alpha_arr = np.zeros(n, dtype=np.float64)
    G_arr = np.full(n, -1.0, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr

    cdef double m, M, v, quad, u, room_i, room_j, ai_new, aj_new, uy
    cdef double inf = np.inf
    cdef Py_ssize_t i, j, t
    cdef long it = 0
    cdef long k

    m = -inf
    M = inf
    for k in range(1, max_iter + 1):
        it = k
        m = -inf
        M = inf
        i = -1
        j = -1
        for t in range(n):
            v = -(y[t] * G[t])
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > m:
                    m = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < M:
                    M = v
                    j = t
        if m - M < tol:
            it = k - 1
            break

        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        u = (m - M) / quad
        room_i = (C - alpha[i]) if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else (C - alpha[j])
        if room_i < u:
            u = room_i
        if room_j < u:
            u = room_j

        ai_new = alpha[i] + y[i] * u
        aj_new = alpha[j] - y[j] * u
        if u == room_i:
            ai_new = C if y[i] > 0 else 0.0
        if u == room_j:
            aj_new = 0.0 if y[j] > 0 else C
        alpha[i] = ai_new
        alpha[j] = aj_new
        for t in range(n):
            uy = u * y[t]
            G[t] = G[t] + uy * (K[i, t] - K[j, t])

    cdef double bias, gap
    if m != -inf and M != inf:
        bias = (m + M) / 2.0
        gap = m - M
    elif m != -inf:
        bias = m
        gap = 0.0
    elif M != inf:
        bias = M
        gap = 0.0
    else:
        bias = 0.0
        gap = 0.0
    return alpha_arr, bias, gap, it
