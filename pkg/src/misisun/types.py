"""Domain types shared across the package.

All matrices are dense float64 and are stored read-only after construction,
so instances can be shared between concurrent solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

FEAS_TOL_CONSTRUCT = 1e-9
FEAS_TOL_OUTPUT = 1e-6


class DimensionError(ValueError):
    """Raised when matrix shapes are not conformal."""


def _as_matrix(data, name: str) -> NDArray[np.float64]:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_simplex_columns(arr: NDArray, tol: float, name: str, nonneg: bool, asc: bool) -> None:
    if nonneg and arr.min() < -tol:
        raise ValueError(f"{name} has negative entries (min {arr.min():.3e})")
    if asc:
        dev = np.abs(arr.sum(axis=0) - 1.0).max()
        if dev > tol:
            raise ValueError(f"{name} columns do not sum to 1 (max deviation {dev:.3e})")


@dataclass(frozen=True)
class HsiMatrix:
    """Observed pixels, bands along rows and pixels along columns."""

    data: NDArray[np.float64]
    spatial_shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "HsiMatrix"))
        if self.spatial_shape is not None:
            h, w = (int(v) for v in self.spatial_shape)
            if h * w != self.pixel_count:
                raise DimensionError(
                    f"spatial shape {h}x{w} does not match pixel count {self.pixel_count}"
                )
            object.__setattr__(self, "spatial_shape", (h, w))

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    @property
    def pixel_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SpectralLibrary:
    """Dictionary of candidate spectra, one atom per column."""

    data: NDArray[np.float64]
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "SpectralLibrary"))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.atom_count:
                raise DimensionError(
                    f"{len(labels)} labels given for {self.atom_count} atoms"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    @property
    def atom_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AbundanceMatrix:
    """Fractional abundances, one column per pixel.

    ``nonneg_enforced`` and ``asc_enforced`` record which simplex constraints
    the producer guarantees; they are checked at ``tol``.
    """

    data: NDArray[np.float64]
    nonneg_enforced: bool = True
    asc_enforced: bool = True
    tol: float = FEAS_TOL_CONSTRUCT

    def __post_init__(self):
        arr = _as_matrix(self.data, "AbundanceMatrix")
        _check_simplex_columns(arr, self.tol, "AbundanceMatrix", self.nonneg_enforced, self.asc_enforced)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class MixingMatrix:
    """Library weights B (atoms x endmembers); each column lies on the simplex."""

    data: NDArray[np.float64]
    tol: float = FEAS_TOL_CONSTRUCT

    def __post_init__(self):
        arr = _as_matrix(self.data, "MixingMatrix")
        _check_simplex_columns(arr, self.tol, "MixingMatrix", True, True)
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class EndmemberMatrix:
    """Endmember spectra, bands x endmembers.

    ``derivation`` is ``"given"`` or ``"computed-as-DB"``.
    """

    data: NDArray[np.float64]
    derivation: str = "given"

    def __post_init__(self):
        if self.derivation not in ("given", "computed-as-DB"):
            raise ValueError(f"unknown derivation tag {self.derivation!r}")
        object.__setattr__(self, "data", _as_matrix(self.data, "EndmemberMatrix"))

    @classmethod
    def from_library(cls, d: SpectralLibrary, b: MixingMatrix | NDArray) -> "EndmemberMatrix":
        bmat = b.data if isinstance(b, MixingMatrix) else np.asarray(b, dtype=np.float64)
        if d.atom_count != bmat.shape[0]:
            raise DimensionError(f"library has {d.atom_count} atoms but B has {bmat.shape[0]} rows")
        return cls(d.data @ bmat, derivation="computed-as-DB")

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    @property
    def r(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the alternating ADMM solver.

    Defaults follow the simulated-data column of the published hyperparameter
    table (T=10000, five inner iterations per block, lambda=0.3); the three AL
    parameters 50, 2, 1 map in order of appearance to ``mu_a``, ``mu_b1`` and
    ``mu_b2``.
    """

    r: int
    T: int = 10000
    T1: int = 5
    T2: int = 5
    mu_a: float = 50.0
    mu_b1: float = 2.0
    mu_b2: float = 1.0
    lam: float = 0.3
    seed: int = 0
    tol_obj: float = 0.0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        for name in ("T", "T1", "T2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("mu_a", "mu_b1", "mu_b2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.tol_obj < 0:
            raise ValueError("tol_obj must be >= 0")

    def as_dict(self) -> dict:
        return {
            "r": self.r, "T": self.T, "T1": self.T1, "T2": self.T2,
            "mu_a": self.mu_a, "mu_b1": self.mu_b1, "mu_b2": self.mu_b2,
            "lambda": self.lam, "seed": self.seed, "tol_obj": self.tol_obj,
        }


@dataclass(frozen=True)
class SolveResult:
    abundances: AbundanceMatrix
    mixing: MixingMatrix
    endmembers: EndmemberMatrix
    objective_trace: NDArray[np.float64]
    iterations_run: int
    wall_time_seconds: float
    config: Optional[SolverConfig] = None
    b_residual: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        trace = np.asarray(self.objective_trace, dtype=np.float64).copy()
        if trace.shape != (self.iterations_run,):
            raise ValueError(
                f"objective trace has {trace.size} entries for {self.iterations_run} iterations"
            )
        if not np.all(np.isfinite(trace)):
            raise ValueError("objective trace contains non-finite values")
        trace.setflags(write=False)
        object.__setattr__(self, "objective_trace", trace)


def as_array(x) -> NDArray[np.float64]:
    """Underlying float64 array of a domain type, or ``x`` coerced to one."""
    if isinstance(x, np.ndarray):
        return x if x.dtype == np.float64 else x.astype(np.float64)
    if isinstance(x, (HsiMatrix, SpectralLibrary, AbundanceMatrix, MixingMatrix, EndmemberMatrix)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def mean_spectrum(y: HsiMatrix) -> NDArray[np.float64]:
    """Per-band mean over pixels."""
    return y.data.mean(axis=1)


def objective_misisun(y: HsiMatrix, d: SpectralLibrary, b, a, lam: float) -> float:
    """0.5*||Y - D B A||_F^2 + lam*||D B - m 1^T||_F^2 with m the mean spectrum of Y."""
    bm, am = as_array(b), as_array(a)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if d.band_count != y.band_count:
        raise DimensionError(f"library has {d.band_count} bands, data has {y.band_count}")
    if bm.shape[0] != d.atom_count or am.shape[0] != bm.shape[1] or am.shape[1] != y.pixel_count:
        raise DimensionError(
            f"non-conformal shapes D{d.data.shape} B{bm.shape} A{am.shape} Y{y.data.shape}"
        )
    e = d.data @ bm
    fit = 0.5 * float(np.sum((y.data - e @ am) ** 2))
    if lam == 0:
        return fit
    centered = e - mean_spectrum(y)[:, None]
    return fit + lam * float(np.sum(centered**2))
