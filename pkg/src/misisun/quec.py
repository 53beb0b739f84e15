"""Closed-form least squares with a sum-to-one equality constraint per column.

Solves, column by column,

    argmin_X 0.5*||T - E X||_F^2 + (mu/2)*||X - G||_F^2   s.t.  1^T X = 1^T

through the bordered KKT system. With Q = (E^T E + mu I)^-1 and
c = -1/(1^T Q 1), the blockwise inverse gives

    X = (Q + Q 1 c 1^T Q)(E^T T + mu G) - Q 1 c 1^T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .types import DimensionError


class QuecConditioningError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class QuecFactorization:
    q: NDArray[np.float64]
    c: float
    et: NDArray[np.float64]
    mu: float
    # Q + Q 1 c 1^T Q and Q 1 c, folded once so a solve is two products.
    proj: NDArray[np.float64]
    offset: NDArray[np.float64]

    @property
    def k(self) -> int:
        return self.q.shape[0]


def quec_prepare(e, mu: float) -> QuecFactorization:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2:
        raise DimensionError(f"E must be 2-D, got shape {e.shape}")
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    if not np.all(np.isfinite(e)):
        raise ValueError("E contains non-finite entries")
    k = e.shape[1]
    gram = e.T @ e
    gram[np.diag_indices(k)] += mu
    try:
        chol = sla.cho_factor(gram, lower=True, check_finite=False)
        q = sla.cho_solve(chol, np.eye(k), check_finite=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(gram)
        raise QuecConditioningError(
            f"E^T E + mu I is not positive definite (mu={mu}, condition estimate {cond:.3e})"
        ) from exc
    q = 0.5 * (q + q.T)
    q1 = q.sum(axis=1)
    c = -1.0 / q1.sum()
    proj = q + c * np.outer(q1, q1)
    offset = c * q1
    return QuecFactorization(q=q, c=c, et=np.ascontiguousarray(e.T), mu=float(mu), proj=proj, offset=offset)


def quec_solve(f: QuecFactorization, t, g, et_t=None) -> NDArray[np.float64]:
    """Minimiser of the constrained problem for data ``t`` and anchor ``g``.

    ``et_t`` may carry a precomputed ``E^T t``; the A-step reuses it across
    inner iterations because E and Y are fixed there.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape[0] != f.k:
        raise DimensionError(f"anchor has {g.shape[0]} rows, factorization expects {f.k}")
    if et_t is None:
        t = np.asarray(t, dtype=np.float64)
        if t.shape[0] != f.et.shape[1] or t.shape[1] != g.shape[1]:
            raise DimensionError(
                f"data shape {t.shape} incompatible with E^T {f.et.shape} and anchor {g.shape}"
            )
        et_t = f.et @ t
    elif et_t.shape != g.shape:
        raise DimensionError(f"E^T T shape {et_t.shape} != anchor shape {g.shape}")
    rhs = et_t + f.mu * g
    return f.proj @ rhs - f.offset[:, None]
