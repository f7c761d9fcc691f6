"""Dense SPD solve/inverse helpers shared by the solvers.

Explicit matrix inversion is confined to :func:`spd_inverse`, which the
variational updates need because downstream scale updates consume the
covariance diagonal and quadratic forms.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .model import SingularSystem


def spd_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky."""
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
        x = scipy.linalg.cho_solve((c, low), b, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"SPD solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("SPD solve produced non-finite values")
    return x


def spd_inverse(A: np.ndarray) -> np.ndarray:
    """Full inverse of a symmetric positive-definite matrix, symmetrized."""
    inv = spd_solve(A, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


def rel_change(new: np.ndarray, old: np.ndarray) -> float:
    """Relative iterate change ||new - old|| / max(||new||, tiny)."""
    denom = max(float(np.linalg.norm(new)), np.finfo(float).tiny)
    return float(np.linalg.norm(np.asarray(new) - np.asarray(old))) / denom
