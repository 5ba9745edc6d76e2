"""SMO backend selection: compiled extension when built, numpy otherwise."""

from __future__ import annotations

import numpy as np

from . import _smo_py

try:
    from . import _smo as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends() -> dict[str, object]:
    backends = {"python": _smo_py.smo_solve}
    if _compiled is not None:
        backends["cython"] = _compiled.smo_solve
    return backends


def smo_solve(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float = 1e-3,
    max_iter: int | None = None,
    backend: str | None = None,
):
    """Solve the SVM dual on a precomputed symmetric kernel matrix.

    Returns (alpha, bias, gap, n_iter). gap is the final KKT violation
    bound m - M; gap < tol means converged.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != y.shape[0]:
        raise ValueError(f"kernel matrix {K.shape} does not match {y.shape[0]} labels")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +/-1")
    if max_iter is None:
        max_iter = max(100_000, 100 * y.shape[0])
    solvers = available_backends()
    name = backend if backend is not None else BACKEND
    if name not in solvers:
        raise ValueError(f"backend {name!r} not available; have {sorted(solvers)}")
    return solvers[name](K, y, float(C), float(tol), int(max_iter))
