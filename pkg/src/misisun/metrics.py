"""Evaluation metrics: SRE, spectral angle, endmember alignment, reconstruction RMSE."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .types import DimensionError, as_array

EXHAUSTIVE_MAX_R = 8
ALIGN_MAX_R = 12


class DegenerateEndmemberError(ValueError):
    """An endmember is the zero vector, so its spectral angle is undefined."""


def sre_db(a_true, a_est) -> float:
    """20*log10(||A||_F / ||A - A_est||_F); +inf when the estimate is exact."""
    a, b = as_array(a_true), as_array(a_est)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    err = np.linalg.norm(a - b)
    if err == 0:
        return math.inf
    return float(20.0 * np.log10(np.linalg.norm(a) / err))


def sad_degrees(e_ref, e_est) -> float:
    u = np.ravel(as_array(e_ref))
    v = np.ravel(as_array(e_est))
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateEndmemberError("spectral angle undefined for a zero endmember")
    # same angle as arccos of the normalised inner product, but exact at 0 and 180 degrees
    du, dv = u / nu, v / nv
    return float(np.degrees(2.0 * np.arctan2(np.linalg.norm(du - dv), np.linalg.norm(du + dv))))


def sad_matrix(e_ref, e_est) -> NDArray[np.float64]:
    """Pairwise angles in degrees, rows indexed by reference columns."""
    a, b = as_array(e_ref), as_array(e_est)
    out = np.empty((a.shape[1], b.shape[1]))
    for i in range(a.shape[1]):
        for j in range(b.shape[1]):
            out[i, j] = sad_degrees(a[:, i], b[:, j])
    return out


def _perm_cost(cost: NDArray, perm) -> float:
    return float(sum(cost[i, j] for i, j in enumerate(perm)))


def align_endmembers(e_ref, e_est) -> NDArray[np.int64]:
    """Permutation ``perm`` such that ``e_est[:, perm]`` best matches ``e_ref``.

    Minimises total SAD exhaustively for r <= 8 (first lexicographic minimiser
    wins ties) and by greedy matching refined with pairwise swaps above that.
    """
    a, b = as_array(e_ref), as_array(e_est)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    r = a.shape[1]
    if r > ALIGN_MAX_R:
        raise ValueError(f"alignment supports r <= {ALIGN_MAX_R}, got {r}")
    cost = sad_matrix(a, b)
    if r <= EXHAUSTIVE_MAX_R:
        best, best_cost = None, math.inf
        for perm in itertools.permutations(range(r)):
            c = _perm_cost(cost, perm)
            if c < best_cost:
                best, best_cost = perm, c
        return np.array(best, dtype=np.int64)

    perm = [-1] * r
    free = set(range(r))
    order = np.argsort(cost, axis=None, kind="stable")
    for flat in order:
        i, j = divmod(int(flat), r)
        if perm[i] < 0 and j in free:
            perm[i] = j
            free.discard(j)
    improved = True
    while improved:
        improved = False
        for i in range(r):
            for k in range(i + 1, r):
                delta = cost[i, perm[k]] + cost[k, perm[i]] - cost[i, perm[i]] - cost[k, perm[k]]
                if delta < -1e-12:
                    perm[i], perm[k] = perm[k], perm[i]
                    improved = True
    return np.array(perm, dtype=np.int64)


def reconstruction_rmse(y, e, a) -> float:
    ym, em, am = as_array(y), as_array(e), as_array(a)
    if em.shape[0] != ym.shape[0] or em.shape[1] != am.shape[0] or am.shape[1] != ym.shape[1]:
        raise DimensionError(f"non-conformal shapes Y{ym.shape} E{em.shape} A{am.shape}")
    return float(np.sqrt(np.mean((ym - em @ am) ** 2)))


@dataclass
class MetricReport:
    sre_db: float
    sad_degrees_per_endmember: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    rmse: float = math.nan
    permutation_used: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sre_library_db: float = math.nan

    def __post_init__(self):
        sad = np.asarray(self.sad_degrees_per_endmember, dtype=np.float64)
        if sad.size and (sad.min() < 0 or sad.max() > 180):
            raise ValueError("SAD values must lie in [0, 180]")
        perm = np.asarray(self.permutation_used, dtype=np.int64)
        if perm.size and sorted(perm.tolist()) != list(range(perm.size)):
            raise ValueError(f"{perm.tolist()} is not a permutation")
        self.sad_degrees_per_endmember = sad
        self.permutation_used = perm

    def to_record(self) -> dict[str, str]:
        rec = {"sre_db": _fmt(self.sre_db)}
        if not math.isnan(self.sre_library_db):
            rec["sre_library_db"] = _fmt(self.sre_library_db)
        for k, v in enumerate(self.sad_degrees_per_endmember):
            rec[f"sad_degrees_{k}"] = _fmt(v)
        if self.sad_degrees_per_endmember.size:
            rec["sad_degrees_mean"] = _fmt(float(self.sad_degrees_per_endmember.mean()))
        rec["rmse"] = _fmt(self.rmse)
        if self.permutation_used.size:
            rec["permutation"] = " ".join(str(int(i)) for i in self.permutation_used)
        return rec


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def evaluate(a_true, a_est, *, e_true=None, e_est=None, y=None, align: bool = False,
             b_true=None, b_est=None) -> MetricReport:
    """Build a MetricReport; alignment permutes estimated endmembers and abundance rows together."""
    at, ae = as_array(a_true), as_array(a_est)
    perm = np.arange(ae.shape[0])
    if align and e_true is not None and e_est is not None:
        perm = align_endmembers(e_true, e_est)
    sad = np.zeros(0)
    if e_true is not None and e_est is not None:
        et, ee = as_array(e_true), as_array(e_est)[:, perm]
        sad = np.array([sad_degrees(et[:, k], ee[:, k]) for k in range(et.shape[1])])
    sre_lib = math.nan
    if b_true is not None and b_est is not None:
        sre_lib = sre_db(as_array(b_true) @ at, as_array(b_est) @ ae)
    rmse = math.nan
    if y is not None and e_est is not None:
        rmse = reconstruction_rmse(y, e_est, ae)
    return MetricReport(
        sre_db=sre_db(at, ae[perm]),
        sad_degrees_per_endmember=sad,
        rmse=rmse,
        permutation_used=perm,
        sre_library_db=sre_lib,
    )
