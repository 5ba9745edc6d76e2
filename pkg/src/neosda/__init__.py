"""Neonatal EEG seizure detection toolkit.

SVM-based detector over a bag of per-epoch features, with kNN/amplitude
outlier gating, post-processing to per-second annotations, the complete
evaluation stack (AUC, kappa, bootstrap CIs, non-inferiority, rank tests)
and clinical seizure-burden analytics. A synthetic corpus generator makes
the whole pipeline runnable without clinical data.
"""

__version__ = "0.1.0"

from .smo import BACKEND as SMO_BACKEND  # noqa: F401
