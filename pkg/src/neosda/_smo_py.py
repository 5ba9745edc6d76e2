"""Pure numpy SMO dual solver (fallback when the compiled core is absent).

Maximal-violating-pair working-set selection on a precomputed kernel
matrix. The compiled twin in _smo.pyx performs the identical operations in
the same order, so both backends walk the same iterate path.
"""

from __future__ import annotations

import numpy as np


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """Solve min 0.5*a'Qa - e'a s.t. 0 <= a <= C, y'a = 0, Q = yy' * K.

    Returns (alpha, bias, gap, n_iter); the caller decides whether a
    remaining gap >= tol is an error.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    G = np.full(n, -1.0)

    m = -np.inf
    M = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mv = -(y * G)
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        up_vals = np.where(up, mv, -np.inf)
        low_vals = np.where(low, mv, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        m = up_vals[i]
        M = low_vals[j]
        if m - M < tol:
            it -= 1
            break

        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        u = (m - M) / quad
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        if room_i < u:
            u = room_i
        if room_j < u:
            u = room_j

        ai_new = alpha[i] + y[i] * u
        aj_new = alpha[j] - y[j] * u
        # Snap saturated multipliers onto the exact bound.
        if u == room_i:
            ai_new = C if y[i] > 0 else 0.0
        if u == room_j:
            aj_new = 0.0 if y[j] > 0 else C
        alpha[i] = ai_new
        alpha[j] = aj_new
        G += (u * y) * (K[i] - K[j])

    if np.isfinite(m) and np.isfinite(M):
        bias = (m + M) / 2.0
        gap = m - M
    elif np.isfinite(m):
        bias, gap = m, 0.0
    elif np.isfinite(M):
        bias, gap = M, 0.0
    else:
        bias, gap = 0.0, 0.0
    return alpha, float(bias), float(gap), it
