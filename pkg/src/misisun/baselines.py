"""Sparse-regression baselines over the full library."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray
from scipy.optimize import nnls

from .quec import quec_prepare, quec_solve
from .types import FEAS_TOL_OUTPUT, AbundanceMatrix, DimensionError, HsiMatrix, SpectralLibrary


@dataclass(frozen=True)
class SunsalConfig:
    lambda_l1: float = 1e-3
    mu: float = 0.1
    iters: int = 2000
    enforce_asc: bool = False
    enforce_anc: bool = True

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")


def soft_threshold(v: NDArray, tau: float) -> NDArray:
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def solve_sunsal(y: HsiMatrix, d: SpectralLibrary, cfg: SunsalConfig = SunsalConfig()) -> AbundanceMatrix:
    """l1-regularised least squares over the library by ADMM with the split X = Z.

    The X-update is a ridge solve (or its sum-to-one constrained variant when
    ``enforce_asc``); Z is the soft-thresholded, optionally clipped, copy and
    is what gets returned.
    """
    if d.band_count != y.band_count:
        raise DimensionError(f"library has {d.band_count} bands, data has {y.band_count}")
    dm, ym = d.data, y.data
    m, n = d.atom_count, y.pixel_count
    dty = dm.T @ ym
    if cfg.enforce_asc:
        fac = quec_prepare(dm, cfg.mu)
    else:
        gram = dm.T @ dm
        gram[np.diag_indices(m)] += cfg.mu
        chol = sla.cho_factor(gram, lower=True, check_finite=False)
    tau = cfg.lambda_l1 / cfg.mu
    z = np.zeros((m, n))
    u = np.zeros((m, n))
    for _ in range(cfg.iters):
        if cfg.enforce_asc:
            x = quec_solve(fac, None, z - u, et_t=dty)
        else:
            x = sla.cho_solve(chol, dty + cfg.mu * (z - u), check_finite=False)
        z = soft_threshold(x + u, tau) if tau > 0 else x + u
        if cfg.enforce_anc:
            z = np.maximum(z, 0.0)
        u = u + x - z
    if cfg.enforce_asc:
        # Z carries nonnegativity, X the equality; report Z rescaled onto the simplex.
        sums = z.sum(axis=0)
        ok = sums > 0
        z[:, ok] /= sums[ok]
        z[:, ~ok] = 1.0 / m
    return AbundanceMatrix(z, nonneg_enforced=cfg.enforce_anc, asc_enforced=cfg.enforce_asc, tol=FEAS_TOL_OUTPUT)


def solve_nnls(y: HsiMatrix, d: SpectralLibrary) -> AbundanceMatrix:
    """Per-pixel nonnegative least squares (active set), the unregularised reference."""
    if d.band_count != y.band_count:
        raise DimensionError(f"library has {d.band_count} bands, data has {y.band_count}")
    x = np.column_stack([nnls(d.data, col)[0] for col in y.data.T])
    return AbundanceMatrix(x, nonneg_enforced=True, asc_enforced=False)
