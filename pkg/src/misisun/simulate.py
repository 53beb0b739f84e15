"""Synthetic scenes and libraries with exact ground truth.

Two scene protocols are provided: a spatially structured 105x105 cube of
homogeneous squares (``sim1``) and an unstructured Dirichlet cube with a
pixel-purity cap (``sim2``). A smooth random library stands in for field
spectra so that the library-weight ground truth B is known.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import gaussian_filter1d

from .types import AbundanceMatrix, EndmemberMatrix, HsiMatrix, MixingMatrix, SpectralLibrary

SIM1_RATIOS = ((0.75, 0.25), (0.5, 0.5), (0.25, 0.75))
MAX_ATTEMPTS_PER_PIXEL = 10**6


class InfeasiblePurityError(ValueError):
    pass


@dataclass(frozen=True)
class Sim1Spec:
    snr_db: float = float("inf")
    seed: int = 0
    grid_side: int = 105
    square_size: int = 5
    blocks_per_side: int = 7
    r: int = 6
    max_abundance: float = 0.75

    def __post_init__(self):
        if self.grid_side % self.blocks_per_side:
            raise ValueError("grid_side must be a multiple of blocks_per_side")
        if self.square_size > self.grid_side // self.blocks_per_side:
            raise ValueError("square does not fit in its block")
        n_binary = math.comb(self.r, 2) * len(SIM1_RATIOS)
        if n_binary > self.blocks_per_side**2:
            raise ValueError(f"{n_binary} binary squares do not fit in the block grid")

    @property
    def n_squares(self) -> int:
        return self.blocks_per_side**2

    @property
    def n_binary(self) -> int:
        return math.comb(self.r, 2) * len(SIM1_RATIOS)


@dataclass(frozen=True)
class Sim2Spec:
    rho: float = 1.0
    snr_db: float = 30.0
    seed: int = 0
    height: int = 100
    width: int = 100
    r: int = 6
    dirichlet_alpha: float = 1.0

    def __post_init__(self):
        if not (1.0 / self.r < self.rho <= 1.0):
            raise InfeasiblePurityError(f"rho must exceed 1/r = {1.0 / self.r:.4f} and be <= 1, got {self.rho}")


@dataclass(frozen=True)
class SyntheticLibrarySpec:
    bands: int = 224
    atoms: int = 60
    r: int = 6
    smoothness: float = 8.0
    variability: int = 0
    max_mix: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.atoms < self.r:
            raise ValueError(f"atom count {self.atoms} < endmember count {self.r}")
        if self.bands < 1 or self.r < 1:
            raise ValueError("bands and r must be positive")
        if not 1 <= self.max_mix:
            raise ValueError("max_mix must be >= 1")
        if self.variability < 0:
            raise ValueError("variability must be >= 0")


def _smooth_spectra(rng: np.random.Generator, bands: int, count: int, width: float) -> NDArray:
    raw = rng.exponential(size=(bands, count))
    if width > 0:
        raw = gaussian_filter1d(raw, sigma=width, axis=0, mode="reflect")
    return raw / raw.max(axis=0, keepdims=True)


def generate_library(spec: SyntheticLibrarySpec) -> tuple[SpectralLibrary, EndmemberMatrix, MixingMatrix]:
    """Random smooth library plus ground-truth endmembers E = D B.

    With ``variability = v`` each base spectrum is followed by ``v`` scaled,
    slightly perturbed copies, mimicking the several-spectra-per-material
    structure of field libraries. Each true endmember mixes 1..``max_mix``
    atoms drawn from distinct base spectra.
    """
    rng = np.random.default_rng(spec.seed)
    p, m, r = spec.bands, spec.atoms, spec.r
    group = spec.variability + 1
    n_base = math.ceil(m / group)
    if n_base < r:
        raise ValueError(f"only {n_base} distinct base spectra for r={r}; lower variability")
    base = _smooth_spectra(rng, p, n_base, spec.smoothness)
    cols, owner = [], []
    for j in range(n_base):
        cols.append(base[:, j])
        owner.append(j)
        for _ in range(spec.variability):
            scale = rng.uniform(0.8, 1.2)
            bump = _smooth_spectra(rng, p, 1, spec.smoothness)[:, 0]
            cols.append(np.clip(scale * (0.9 * base[:, j] + 0.1 * bump), 0.0, None))
            owner.append(j)
    d = np.stack(cols[:m], axis=1)
    owner = np.array(owner[:m])

    b = np.zeros((m, r))
    bases = rng.choice(n_base, size=r, replace=False)
    spare = np.setdiff1d(np.arange(n_base), bases)
    for k in range(r):
        n_mix = int(rng.integers(1, min(spec.max_mix, spare.size + 1) + 1))
        chosen_bases = [bases[k], *rng.choice(spare, size=n_mix - 1, replace=False)]
        atoms = [int(rng.choice(np.flatnonzero(owner == j))) for j in chosen_bases]
        if n_mix == 1:
            w = np.ones(1)
        else:
            # the designated atom dominates so endmembers stay distinguishable
            w = rng.dirichlet(np.ones(n_mix))
            w = 0.5 * np.eye(n_mix)[0] + 0.5 * w
        b[atoms, k] = w
    lib = SpectralLibrary(d, labels=[f"atom{j:03d}" for j in range(m)])
    mixing = MixingMatrix(b)
    return lib, EndmemberMatrix.from_library(lib, mixing), mixing


def add_noise(y_clean: HsiMatrix, snr_db: float, seed) -> HsiMatrix:
    """Add white Gaussian noise rescaled to hit ``snr_db`` exactly (Frobenius ratio)."""
    if math.isinf(snr_db) and snr_db > 0:
        return y_clean
    signal = np.linalg.norm(y_clean.data)
    if signal == 0:
        raise ValueError("cannot set an SNR for an all-zero signal")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.standard_normal(y_clean.data.shape)
    noise *= signal * 10.0 ** (-snr_db / 20.0) / np.linalg.norm(noise)
    return HsiMatrix(y_clean.data + noise, spatial_shape=y_clean.spatial_shape)


def _capped_mixture(rng: np.random.Generator, r: int, cap: float) -> NDArray:
    while True:
        k = int(rng.integers(3, r + 1))
        support = rng.choice(r, size=k, replace=False)
        w = rng.dirichlet(np.ones(k))
        if w.max() <= cap:
            a = np.zeros(r)
            a[support] = w
            return a


def sim1_layout(spec: Sim1Spec) -> NDArray[np.int64]:
    """Square index for each pixel (row-major), -1 for background."""
    side, block = spec.grid_side, spec.grid_side // spec.blocks_per_side
    off = (block - spec.square_size) // 2
    label = -np.ones((side, side), dtype=np.int64)
    for q in range(spec.n_squares):
        bi, bj = divmod(q, spec.blocks_per_side)
        r0, c0 = bi * block + off, bj * block + off
        label[r0:r0 + spec.square_size, c0:c0 + spec.square_size] = q
    return label.ravel()


def generate_sim1(spec: Sim1Spec, endmembers: EndmemberMatrix) -> tuple[HsiMatrix, AbundanceMatrix]:
    r = spec.r
    if endmembers.r != r:
        raise ValueError(f"sim1 needs {r} endmembers, got {endmembers.r}")
    rng = np.random.default_rng(spec.seed)
    squares = []
    for i, j in itertools.combinations(range(r), 2):
        for wi, wj in SIM1_RATIOS:
            a = np.zeros(r)
            a[i], a[j] = wi, wj
            squares.append(a)
    while len(squares) < spec.n_squares:
        squares.append(_capped_mixture(rng, r, spec.max_abundance))
    table = np.vstack([np.full(r, 1.0 / r)] + squares).T
    label = sim1_layout(spec)
    a = table[:, label + 1]
    shape = (spec.grid_side, spec.grid_side)
    y = HsiMatrix(endmembers.data @ a, spatial_shape=shape)
    y = add_noise(y, spec.snr_db, rng)
    return y, AbundanceMatrix(a)


def max_dirichlet_cdf(t: float, r: int) -> float:
    """P(max_i a_i <= t) for a ~ Dirichlet(1, ..., 1) in r dimensions."""
    return float(sum((-1) ** k * math.comb(r, k) * max(1.0 - k * t, 0.0) ** (r - 1) for k in range(r + 1)))


def sample_capped_dirichlet(rng: np.random.Generator, r: int, n: int, rho: float, alpha: float = 1.0) -> NDArray:
    """n columns from symmetric Dirichlet(alpha) with columns whose max exceeds rho rejected."""
    out = np.empty((r, 0))
    attempts = 0
    accept = max_dirichlet_cdf(rho, r) if alpha == 1.0 else 0.5
    while out.shape[1] < n:
        need = n - out.shape[1]
        batch = int(min(max(2 * need / max(accept, 1e-6), 64), 2_000_000))
        draw = rng.dirichlet(np.full(r, alpha), size=batch).T
        attempts += batch
        keep = draw[:, draw.max(axis=0) <= rho]
        out = np.hstack([out, keep[:, :need]])
        if out.shape[1] == 0 and attempts > MAX_ATTEMPTS_PER_PIXEL:
            raise InfeasiblePurityError(f"no column with max <= {rho} after {attempts} draws")
        if attempts > MAX_ATTEMPTS_PER_PIXEL * n:
            raise InfeasiblePurityError(f"rejection sampling exceeded {MAX_ATTEMPTS_PER_PIXEL} draws per pixel")
    return out


def generate_sim2(spec: Sim2Spec, endmembers: EndmemberMatrix) -> tuple[HsiMatrix, AbundanceMatrix]:
    if endmembers.r != spec.r:
        raise ValueError(f"sim2 needs {spec.r} endmembers, got {endmembers.r}")
    rng = np.random.default_rng(spec.seed)
    n = spec.height * spec.width
    a = sample_capped_dirichlet(rng, spec.r, n, spec.rho, spec.dirichlet_alpha)
    y = HsiMatrix(endmembers.data @ a, spatial_shape=(spec.height, spec.width))
    y = add_noise(y, spec.snr_db, rng)
    return y, AbundanceMatrix(a)
