"""Receive-filter noise whitening.

Shaped noise F W has covariance sigma_w2 * F F^T per antenna.  Factoring
F F^T = L L^T and applying L^{-1} to the window restores a white-noise model
with the same per-sample variance, at the cost of Z losing its Toeplitz
structure.

For oversampling factors above 1 the covariance is nearly singular: the
pulse occupies only part of the sampled band, so a sizable subspace carries
almost no noise.  An exact inverse would amplify those directions by orders
of magnitude, and with them every model imperfection (fractional-delay
mismatch, pulse truncation).  A small diagonal load caps that gain; the
whitened noise covariance becomes I - ridge-correction <= I, i.e. the
receiver is slightly conservative in the low-noise band instead of
explosively overconfident.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .pulse import PulseBank

# Fraction of the mean covariance diagonal added before factoring.
WHITENING_RIDGE = 1e-2


def prewhiten(Y: np.ndarray, pulse: PulseBank, ridge: float | None = None):
    """Whiten the observation and the symbol-response operator.

    Returns (Y_white, Z_white, L) with L the lower Cholesky factor of
    F F^T + ridge * mean(diag(F F^T)) * I.  ``ridge`` defaults to the
    module-level WHITENING_RIDGE.  Raises LinAlgError with a condition
    estimate when the factor does not exist numerically.
    """
    if ridge is None:
        ridge = WHITENING_RIDGE
    cov = pulse.F @ pulse.F.T
    if ridge > 0.0:
        cov = cov + ridge * float(np.mean(np.diag(cov))) * np.eye(cov.shape[0])
    try:
        L = cholesky(cov, lower=True)
    except np.linalg.LinAlgError as err:
        cond = np.linalg.cond(cov)
        raise np.linalg.LinAlgError(
            f"receive-filter covariance not factorizable (cond ~ {cond:.3e})"
        ) from err
    Y_white = solve_triangular(L, Y, lower=True)
    Z_white = solve_triangular(L, pulse.Z, lower=True)
    return Y_white, Z_white, L
