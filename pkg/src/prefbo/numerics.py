"""Shared dense linear-algebra helpers with bounded, reproducible fallbacks."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh

JITTER_START = 1e-10
JITTER_STOP = 1e-6
JITTER_GROWTH = 10.0


class FactorizationError(RuntimeError):
    """Raised when a matrix cannot be factorized even after jitter escalation."""


def chol_with_jitter(mat: np.ndarray, scale: float = 1.0):
    """Cholesky factorization with multiplicative jitter escalation.

    Jitter grows from 1e-10 to 1e-6 (times ``scale``) and then gives up,
    so behaviour is bounded and reproducible rather than silently looping.
    Returns ``(cho_factor_result, jitter_used)``.
    """
    jitter = 0.0
    while True:
        try:
            shifted = mat if jitter == 0.0 else mat + jitter * scale * np.eye(len(mat))
            return cho_factor(shifted, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * JITTER_GROWTH
            if jitter > JITTER_STOP:
                raise FactorizationError(
                    f"Cholesky failed with jitter up to {JITTER_STOP:g}*{scale:g}"
                ) from None


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular-or-square factor L with L @ L.T = cov (PSD-safe).

    Tries a plain Cholesky first; on failure falls back to an
    eigendecomposition with negative eigenvalues clipped to zero, which
    handles exactly-singular covariances (e.g. duplicated points) without
    perturbing them.
    """
    if cov.size == 0:
        return cov.copy()
    try:
        return cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        vals, vecs = eigh(cov)
        if not np.all(np.isfinite(vals)):
            raise FactorizationError("covariance has non-finite eigenvalues") from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def solve_psd(factor, rhs: np.ndarray) -> np.ndarray:
    """Solve using a factor from :func:`chol_with_jitter`."""
    return cho_solve(factor, rhs)
