"""Seeded benchmark cells shared by the ``bench`` command and the acceptance suite."""

from __future__ import annotations

import math
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import SunsalConfig, solve_sunsal
from .metrics import align_endmembers, sre_db
from .simulate import (
    Sim1Spec,
    Sim2Spec,
    SyntheticLibrarySpec,
    generate_library,
    generate_sim1,
    generate_sim2,
)
from .solver import solve_fclsu, solve_misisun
from .types import SolverConfig

ALGORITHMS = ("misisun", "fasun", "fclsu", "sunsal")
QUICK_T = 1000


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    words = [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def cell_seed(base_seed: int, algo: str, condition: str, repeat: int) -> int:
    return int(base_seed) + zlib.crc32(f"{algo}|{condition}|{repeat}".encode())


@dataclass(frozen=True)
class Scene:
    y: object
    library: object
    a_true: object
    e_true: object
    b_true: object
    meta: dict = field(default_factory=dict)


def make_scene(suite: str, *, seed: int, snr_db: float = 30.0, rho: float = 1.0, bands: int = 224,
               atoms: int = 60, r: int = 6, library_seed: int | None = None) -> Scene:
    lib_seed = derive_seed(seed, "library") if library_seed is None else library_seed
    scene_seed = derive_seed(seed, suite, "scene")
    lib, e_true, b_true = generate_library(SyntheticLibrarySpec(bands=bands, atoms=atoms, r=r, seed=lib_seed))
    if suite == "sim1":
        y, a = generate_sim1(Sim1Spec(snr_db=snr_db, seed=scene_seed, r=r), e_true)
    elif suite == "sim2":
        y, a = generate_sim2(Sim2Spec(rho=rho, snr_db=snr_db, seed=scene_seed, r=r), e_true)
    else:
        raise ValueError(f"unknown suite {suite!r}")
    meta = {"generator": suite, "seed": seed, "library_seed": lib_seed, "scene_seed": scene_seed,
            "snr_db": snr_db, "rho": rho if suite == "sim2" else "", "r": r}
    return Scene(y, lib, a, e_true, b_true, meta)


@dataclass(frozen=True)
class AlgoParams:
    solver: SolverConfig = SolverConfig(r=6, T=QUICK_T)
    sunsal: SunsalConfig = SunsalConfig()
    fclsu_iters: int = 2000


@dataclass
class CellResult:
    algo: str
    sre_db: float
    sre_abundance_db: float
    rmse: float
    wall_seconds: float
    iterations: int
    estimate: dict = field(default_factory=dict, repr=False)


def run_algorithm(algo: str, scene: Scene, params: AlgoParams) -> CellResult:
    """Run one algorithm on a scene.

    ``sre_db`` compares library-space abundances B A so every algorithm is
    scored on the same m x n target without any permutation;
    ``sre_abundance_db`` compares the r x n abundances after endmember
    alignment (not defined for the full-library baseline).
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    y, lib = scene.y, scene.library
    x_true = scene.b_true.data @ scene.a_true.data
    t0 = time.perf_counter()
    if algo in ("misisun", "fasun"):
        cfg = params.solver if algo == "misisun" else replace(params.solver, lam=0.0)
        res = solve_misisun(y, lib, cfg)
        a_est, b_est, e_est = res.abundances.data, res.mixing.data, res.endmembers.data
        iterations = res.iterations_run
        x_est = b_est @ a_est
        estimate = {"A": a_est, "B": b_est, "E": e_est, "trace": res.objective_trace}
    elif algo == "fclsu":
        e_est = scene.e_true.data
        a_est = solve_fclsu(y, scene.e_true, params.solver.mu_a, params.fclsu_iters).data
        x_est = scene.b_true.data @ a_est
        iterations = params.fclsu_iters
        estimate = {"A": a_est, "E": e_est}
    else:
        x_est = solve_sunsal(y, lib, params.sunsal).data
        iterations = params.sunsal.iters
        e_est = a_est = None
        estimate = {"A": x_est}
    wall = time.perf_counter() - t0

    if a_est is not None:
        perm = align_endmembers(scene.e_true.data, e_est)
        sre_ab = sre_db(scene.a_true.data, a_est[perm])
        recon = e_est @ a_est
    else:
        sre_ab = math.nan
        recon = lib.data @ x_est
    rmse = float(np.sqrt(np.mean((y.data - recon) ** 2)))
    return CellResult(algo, sre_db(x_true, x_est), sre_ab, rmse, wall, iterations, estimate)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("UNMIX_THREADS", "1")))
    except ValueError:
        return 1


def run_grid(suite: str, algos, conditions, repeats: int, params: AlgoParams, *, base_seed: int = 0,
             snr_db: float = 30.0, bands: int = 224, atoms: int = 60, r: int = 6) -> list[dict]:
    """One row per (algorithm, condition, repeat); algorithms share each scene.

    ``conditions`` are SNR values for sim1 and purity levels for sim2.
    """
    cells = []
    for cond in conditions:
        label = f"snr={cond:g}" if suite == "sim1" else f"rho={cond:g}"
        for rep in range(repeats):
            kwargs = {"snr_db": float(cond)} if suite == "sim1" else {"rho": float(cond), "snr_db": snr_db}
            data_seed = derive_seed(base_seed, label, rep)
            cells.append((label, rep, data_seed, kwargs))

    def run_cell(cell):
        label, rep, data_seed, kwargs = cell
        scene = make_scene(suite, seed=data_seed, bands=bands, atoms=atoms, r=r,
                           library_seed=derive_seed(base_seed, "library", rep), **kwargs)
        rows = []
        for algo in algos:
            seed = cell_seed(base_seed, algo, label, rep)
            res = run_algorithm(algo, scene, replace(params, solver=replace(params.solver, seed=seed)))
            rows.append({
                "suite": suite, "algo": algo, "condition": label, "repeat": rep,
                "data_seed": data_seed, "cell_seed": seed,
                "sre_db": res.sre_db, "sre_abundance_db": res.sre_abundance_db,
                "rmse": res.rmse, "wall_seconds": res.wall_seconds, "iterations": res.iterations,
            })
        return rows

    workers = min(worker_count(), len(cells)) or 1
    if workers == 1:
        nested = [run_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(run_cell, cells))
    rows = [row for group in nested for row in group]
    order = {a: k for k, a in enumerate(algos)}
    rows.sort(key=lambda row: (order[row["algo"]], _cond_index(conditions, suite, row["condition"]), row["repeat"]))
    return rows


def _cond_index(conditions, suite, label) -> int:
    for k, c in enumerate(conditions):
        if label == (f"snr={c:g}" if suite == "sim1" else f"rho={c:g}"):
            return k
    return len(conditions)


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and sample standard deviation per (algorithm, condition)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["suite"], row["algo"], row["condition"]), []).append(row)
    out = []
    for (suite, algo, cond), members in groups.items():
        rec = {"suite": suite, "algo": algo, "condition": cond, "runs": len(members)}
        for key in ("sre_db", "sre_abundance_db", "rmse", "wall_seconds"):
            vals = np.array([m[key] for m in members], dtype=float)
            rec[f"{key}_mean"] = float(vals.mean())
            rec[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(rec)
    return out
