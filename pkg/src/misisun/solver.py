"""Two-block cyclic ADMM for library-based archetypal unmixing.

The model is Y ~ D B A with both A (r x n) and B (m x r) columnwise on the
simplex, plus a center penalty lam*||D B - m 1^T||_F^2 that pulls the
endmembers D B toward the mean spectrum m and so shrinks the simplex they
span. ``lam = 0`` gives the plain library archetypal model (FaSUn).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .quec import quec_prepare, quec_solve
from .types import (
    FEAS_TOL_OUTPUT,
    AbundanceMatrix,
    DimensionError,
    EndmemberMatrix,
    HsiMatrix,
    MixingMatrix,
    SolveResult,
    SolverConfig,
    SpectralLibrary,
    as_array,
    mean_spectrum,
)

logger = logging.getLogger(__name__)

STOP_WINDOW = 10
# amplitude of the seeded initial perturbation that separates endmember columns
INIT_JITTER = 1e-6
# pixels per cache block in the A-step inner loop
A_STEP_BLOCK = 2048


class SolverDivergence(FloatingPointError):
    """Objective became non-finite during a solve."""

    def __init__(self, iteration: int, block: str, value: float):
        self.iteration = iteration
        self.block = block
        self.value = value
        super().__init__(f"non-finite objective {value} at outer iteration {iteration} after the {block}-step")


@dataclass
class AdmmStateA:
    a: NDArray[np.float64]
    s: NDArray[np.float64]
    l: NDArray[np.float64]

    @classmethod
    def zeros(cls, r: int, n: int) -> "AdmmStateA":
        return cls(np.zeros((r, n)), np.zeros((r, n)), np.zeros((r, n)))


@dataclass
class AdmmStateB:
    b: NDArray[np.float64]
    s1: NDArray[np.float64]
    s2: NDArray[np.float64]
    l1: NDArray[np.float64]
    l2: NDArray[np.float64]

    @classmethod
    def zeros(cls, m: int, p: int, r: int) -> "AdmmStateB":
        return cls(np.zeros((m, r)), np.zeros((m, r)), np.zeros((p, r)), np.zeros((m, r)), np.zeros((p, r)))



def _data(x) -> NDArray[np.float64]:
    return as_array(x)


def a_step(y, e, state: AdmmStateA, mu_a: float, t1: int, ety: NDArray | None = None) -> AdmmStateA:
    """Run ``t1`` ADMM iterations of simplex-constrained least squares for A, E fixed.

    Each iteration solves the equality-constrained QP for A with anchor S - L,
    projects S = max(0, A + L) and ascends L += A - S. ``ety`` may hold a
    precomputed E^T Y.
    """
    if t1 < 1:
        raise ValueError("t1 must be >= 1")
    ym, em = _data(y), _data(e)
    if em.shape[0] != ym.shape[0]:
        raise DimensionError(f"E has {em.shape[0]} bands, Y has {ym.shape[0]}")
    fac = quec_prepare(em, mu_a)
    if ety is None:
        ety = fac.et @ ym
    elif ety.shape != state.s.shape:
        raise DimensionError(f"E^T Y has shape {ety.shape}, expected {state.s.shape}")
    # Same arithmetic as quec_solve, written in place and swept over pixel
    # blocks so the r x block working set stays cache resident; pixels are
    # independent here, so blocking does not change the result.
    r, n = state.s.shape
    a, s, l = np.empty((r, n)), np.empty((r, n)), np.empty((r, n))
    offset = fac.offset[:, None]
    # near-equal blocks: a one-column block would go through a different BLAS
    # kernel (matrix-vector) and could round differently
    nblocks = -(-n // A_STEP_BLOCK)
    edges = [n * k // nblocks for k in range(nblocks + 1)]
    width = 0
    for j0, j1 in zip(edges[:-1], edges[1:]):
        cols = slice(j0, j1)
        if j1 - j0 != width:
            width = j1 - j0
            ab, sb, lb, eb, rhs = (np.empty((r, width)) for _ in range(5))
        sb[...] = state.s[:, cols]
        lb[...] = state.l[:, cols]
        eb[...] = ety[:, cols]
        for _ in range(t1):
            np.subtract(sb, lb, out=rhs)
            rhs *= fac.mu
            rhs += eb
            np.matmul(fac.proj, rhs, out=ab)
            ab -= offset
            np.add(ab, lb, out=sb)
            np.maximum(sb, 0.0, out=sb)
            lb += ab
            lb -= sb
        a[:, cols], s[:, cols], l[:, cols] = ab, sb, lb
    return AdmmStateA(a, s, l)


def b_step(y, d, a, state: AdmmStateB, mu_b1: float, mu_b2: float, lam: float, t2: int,
           mean: NDArray | None = None, fac=None, ya: NDArray | None = None) -> AdmmStateB:
    """Run ``t2`` ADMM iterations for the library weights B with A fixed.

    Splits B = S1 (nonnegativity) and D B = S2 (data fit and center penalty).
    ``fac`` may hold the cached factorization of (D, mu_b1/mu_b2), which is
    constant for a whole solve; ``ya`` may hold a precomputed Y A^T.
    """
    if t2 < 1:
        raise ValueError("t2 must be >= 1")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    ym, dm, am = _data(y), _data(d), _data(a)
    p, r = dm.shape[0], am.shape[0]
    if ym.shape[0] != p or am.shape[1] != ym.shape[1] or state.b.shape != (dm.shape[1], r):
        raise DimensionError(f"non-conformal shapes Y{ym.shape} D{dm.shape} A{am.shape} B{state.b.shape}")
    if mean is None:
        mean = ym.mean(axis=1)
    if fac is None:
        fac = quec_prepare(dm, mu_b1 / mu_b2)

    gram = am @ am.T
    gram[np.diag_indices(r)] += mu_b2 + lam
    # S2 = rhs @ gram^-1; gram is SPD so solve via Cholesky on the transpose.
    chol = sla.cho_factor(gram, lower=True, check_finite=False)
    if ya is None:
        ya = ym @ am.T
    if lam:
        ya = ya + lam * mean[:, None]

    b, s1, s2, l1, l2 = state.b, state.s1, state.s2, state.l1, state.l2
    for _ in range(t2):
        b = quec_solve(fac, s2 - l2, s1 - l1)
        s1 = np.maximum(b + l1, 0.0)
        db = dm @ b
        s2 = sla.cho_solve(chol, (ya + mu_b2 * (db + l2)).T, check_finite=False).T
        l1 = l1 + b - s1
        l2 = l2 + db - s2
    return AdmmStateB(b, s1, s2, l1, l2)


def _objective(ya, e, a, lam, mean, yy) -> float:
    # 0.5*||Y - E A||^2 expanded through Gram matrices, reusing ya = Y A^T,
    # so no extra pass over Y is needed.
    fit = 0.5 * (yy - 2.0 * np.vdot(ya, e) + np.vdot(e.T @ e, a @ a.T))
    if lam:
        fit += lam * float(np.sum((e - mean[:, None]) ** 2))
    return float(fit)


def project_columns_to_simplex(x: NDArray) -> NDArray:
    """Clip negatives and rescale columns to sum to one; all-zero columns become uniform."""
    x = np.maximum(x, 0.0)
    sums = x.sum(axis=0)
    out = np.empty_like(x)
    ok = sums > 0
    out[:, ok] = x[:, ok] / sums[ok]
    out[:, ~ok] = 1.0 / x.shape[0]
    return out


def solve_misisun(y: HsiMatrix, d: SpectralLibrary, cfg: SolverConfig, *,
                  asc_renormalize: bool = False, callback=None, jitter: float = INIT_JITTER) -> SolveResult:
    """Estimate abundances A and library weights B by alternating ADMM blocks.

    Returns the nonnegative split S as abundances (renormalized to sum one
    only when ``asc_renormalize``), B from the nonnegative split S1 projected
    onto the simplex, and endmembers D B.
    """
    if d.band_count != y.band_count:
        raise DimensionError(f"library has {d.band_count} bands, data has {y.band_count}")
    if cfg.r > d.atom_count:
        raise ValueError(f"r={cfg.r} exceeds library size {d.atom_count}")
    ym, dm = y.data, d.data
    p, n = ym.shape
    m, r = d.atom_count, cfg.r
    mean = mean_spectrum(y)
    yy = float(np.vdot(ym, ym))

    sa = AdmmStateA.zeros(r, n)
    if jitter > 0:
        # Zero initialisation makes all r endmember columns identical; a seeded
        # perturbation of the abundance split breaks that symmetry reproducibly.
        sa.s = jitter * np.random.default_rng(cfg.seed).random((r, n))
    sb = AdmmStateB.zeros(m, p, r)
    fac_b = quec_prepare(dm, cfg.mu_b1 / cfg.mu_b2)
    # E^T Y = B^T (D^T Y): the m x n product is formed once and is smaller than Y when m < p.
    dty = dm.T @ ym if m < p else None

    trace = []
    t0 = time.perf_counter()
    for t in range(cfg.T):
        e = dm @ sb.b
        sa = a_step(ym, e, sa, cfg.mu_a, cfg.T1, ety=None if dty is None else sb.b.T @ dty)
        if not np.all(np.isfinite(sa.a)):
            raise SolverDivergence(t, "A", float("nan"))
        ya = ym @ sa.a.T
        sb = b_step(ym, dm, sa.a, sb, cfg.mu_b1, cfg.mu_b2, cfg.lam, cfg.T2, mean=mean, fac=fac_b, ya=ya)
        value = _objective(ya, dm @ sb.b, sa.a, cfg.lam, mean, yy)
        if not np.isfinite(value):
            raise SolverDivergence(t, "B", value)
        trace.append(value)
        if callback is not None:
            callback(t, value)
        if cfg.tol_obj > 0 and len(trace) > STOP_WINDOW:
            old = trace[-1 - STOP_WINDOW]
            if abs(old - value) <= cfg.tol_obj * max(abs(old), np.finfo(float).tiny):
                logger.debug("early stop at outer iteration %d", t + 1)
                break
    wall = time.perf_counter() - t0

    a_hat = np.maximum(sa.s, 0.0)
    if asc_renormalize:
        a_hat = project_columns_to_simplex(a_hat)
    s1 = np.maximum(sb.s1, 0.0)
    b_residual = float(np.abs(s1.sum(axis=0) - 1.0).max())
    b_hat = project_columns_to_simplex(s1)
    return SolveResult(
        abundances=AbundanceMatrix(a_hat, nonneg_enforced=True, asc_enforced=asc_renormalize, tol=FEAS_TOL_OUTPUT),
        mixing=MixingMatrix(b_hat),
        endmembers=EndmemberMatrix.from_library(d, b_hat),
        objective_trace=np.array(trace),
        iterations_run=len(trace),
        wall_time_seconds=wall,
        config=cfg,
        b_residual=b_residual,
        metadata={"algo": "fasun" if cfg.lam == 0 else "misisun", **cfg.as_dict()},
    )


def solve_fasun(y: HsiMatrix, d: SpectralLibrary, cfg: SolverConfig, **kwargs) -> SolveResult:
    """The center-penalty-free special case (lam forced to 0)."""
    return solve_misisun(y, d, replace(cfg, lam=0.0), **kwargs)


def solve_fclsu(y: HsiMatrix, e: EndmemberMatrix, mu_a: float = 50.0, iters: int = 2000) -> AbundanceMatrix:
    """Fully constrained least squares abundances for fixed endmembers.

    Runs the A-step alone; the returned abundances are the nonnegative split
    projected onto the simplex.
    """
    ym, em = _data(y), _data(e)
    if em.shape[0] != ym.shape[0]:
        raise DimensionError(f"E has {em.shape[0]} bands, Y has {ym.shape[0]}")
    state = a_step(ym, em, AdmmStateA.zeros(em.shape[1], ym.shape[1]), mu_a, iters)
    return AbundanceMatrix(project_columns_to_simplex(state.s), tol=FEAS_TOL_OUTPUT)
