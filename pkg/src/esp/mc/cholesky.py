"""Cholesky factorization, implemented directly (no LAPACK linkage).

Cholesky-Banachiewicz with NumPy row dot products for the inner sums.
Raises NOT_PD with the failing pivot (1-based) when a pivot drops to or
below 1e-12. Symmetry is required; the factorization itself does not
require a unit diagonal (correlation-matrix validation enforces that
separately), so general SPD matrices factor fine.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import EspError

SYMMETRY_TOL = 1e-12
PIVOT_TOL = 1e-12


def cholesky(matrix) -> np.ndarray:
    sigma = np.asarray(matrix, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise EspError("SCHEMA", "correlation matrix must be square")
    if sigma.size and not np.isfinite(sigma).all():
        raise EspError("SCHEMA", "correlation matrix entries must be finite")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise EspError("SCHEMA", f"matrix not symmetric within {SYMMETRY_TOL}")
    n = sigma.shape[0]
    lower = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1):
            acc = sigma[i, j] - float(np.dot(lower[i, :j], lower[j, :j]))
            if i == j:
                if acc <= PIVOT_TOL:
                    raise EspError(
                        "NOT_PD",
                        f"matrix is not positive definite: pivot {i + 1} = {acc:.6g}",
                        {"pivot": i + 1, "value": acc},
                    )
                lower[i, i] = math.sqrt(acc)
            else:
                lower[i, j] = acc / lower[j, j]
    return lower
