"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The verdict lines are repeated, in criterion order, in pytest's terminal
summary. Criteria 6 and 7 share one cached benchmark grid.
"""

import math
import sys
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from misisun.experiments import AlgoParams, aggregate, run_grid
from misisun.metrics import align_endmembers, sad_degrees, sre_db
from misisun.quec import quec_prepare, quec_solve
from misisun.simulate import (
    Sim1Spec,
    Sim2Spec,
    SyntheticLibrarySpec,
    add_noise,
    generate_library,
    generate_sim1,
    generate_sim2,
    sim1_layout,
)
from misisun.solver import solve_fasun, solve_fclsu, solve_misisun
from misisun.types import HsiMatrix, SolverConfig

from test_metrics import brute_force
from test_quec import kkt_oracle, random_instance

pytestmark = pytest.mark.acceptance

DEFAULT_CFG = SolverConfig(r=6, T=1000)


# collected here and echoed by the terminal-summary hook in conftest.py
VERDICTS: dict[int, str] = {}


def verdict(number: int, ok: bool, detail: str) -> None:
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}"
    VERDICTS[number] = line
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------- QuEC

@pytest.fixture(scope="module")
def quec_runs():
    rng = np.random.default_rng(2024)
    instances = [random_instance(rng) for _ in range(100)]
    t0 = time.perf_counter()
    outs = [quec_solve(quec_prepare(e, mu), t, g) for e, t, g, mu in instances]
    elapsed = time.perf_counter() - t0
    return instances, outs, elapsed


def test_criterion_01_quec_oracle(quec_runs):
    instances, outs, elapsed = quec_runs
    worst = max(np.abs(x - kkt_oracle(e, t, g, mu)).max() for (e, t, g, mu), x in zip(instances, outs))
    verdict(1, worst <= 1e-8 and elapsed < 1.0, f"max |closed form - KKT| = {worst:.2e} (<= 1e-8), {elapsed:.3f} s")


def test_criterion_02_quec_feasibility(quec_runs):
    _, outs, _ = quec_runs
    worst = max(np.abs(x.sum(axis=0) - 1.0).max() for x in outs)
    verdict(2, worst <= 1e-10, f"max column-sum error = {worst:.2e} (<= 1e-10)")


# ---------------------------------------------------------------- FCLSU

def test_criterion_03_fclsu_exact_recovery():
    _, e, _ = generate_library(SyntheticLibrarySpec(seed=11))
    rng = np.random.default_rng(12)
    a_true = rng.dirichlet(np.ones(6), size=1000).T
    y = HsiMatrix(e.data @ a_true)
    t0 = time.perf_counter()
    a = solve_fclsu(y, e, mu_a=50.0, iters=2000).data
    elapsed = time.perf_counter() - t0
    sre = sre_db(a_true, a)
    sums = np.abs(a.sum(axis=0) - 1.0).max()
    ok = sre >= 50.0 and a.min() >= 0.0 and sums <= 1e-6 and elapsed < 30.0
    verdict(3, ok, f"SRE = {sre:.2f} dB (>= 50), min = {a.min():.1e}, sum err = {sums:.1e}, {elapsed:.1f} s")


# ---------------------------------------------------------------- descent, reduction, determinism

@pytest.fixture(scope="module")
def sim2_instance():
    lib, e, _ = generate_library(SyntheticLibrarySpec(seed=1))
    y, _ = generate_sim2(Sim2Spec(rho=0.8, snr_db=30.0, seed=2), e)
    return y, lib


@pytest.fixture(scope="module")
def descent_run(sim2_instance):
    y, lib = sim2_instance
    t0 = time.process_time()
    res = solve_misisun(y, lib, DEFAULT_CFG)
    return res, time.process_time() - t0


def test_criterion_04_descent(descent_run):
    res, cpu = descent_run
    v = res.objective_trace
    steps = np.diff(v[10:])
    ok_steps = steps <= 1e-6 * (1.0 + np.abs(v[11:]))
    frac = float(ok_steps.mean())
    ok = v[-1] < v[0] and frac >= 0.99 and cpu < 300.0
    verdict(4, ok, f"last {v[-1]:.4f} < first {v[0]:.4f}: {v[-1] < v[0]}; "
                   f"non-increasing pairs after iteration 10 = {100 * frac:.2f}% (>= 99%), CPU {cpu:.1f} s")


def test_criterion_05_lambda_zero_reduction(sim2_instance):
    y, lib = sim2_instance
    r0 = solve_misisun(y, lib, replace(DEFAULT_CFG, lam=0.0))
    r1 = solve_fasun(y, lib, DEFAULT_CFG)
    same = (np.array_equal(r0.abundances.data, r1.abundances.data)
            and np.array_equal(r0.mixing.data, r1.mixing.data)
            and np.array_equal(r0.endmembers.data, r1.endmembers.data)
            and np.array_equal(r0.objective_trace, r1.objective_trace))
    verdict(5, same, "lambda = 0 and the FaSUn alias are bitwise identical" if same else "outputs differ")


def test_criterion_10_determinism(sim2_instance, descent_run):
    y, lib = sim2_instance
    first, _ = descent_run
    again = solve_misisun(y, lib, DEFAULT_CFG)
    same = (np.array_equal(first.abundances.data, again.abundances.data)
            and np.array_equal(first.mixing.data, again.mixing.data)
            and np.array_equal(first.endmembers.data, again.endmembers.data)
            and np.array_equal(first.objective_trace, again.objective_trace))
    verdict(10, same, "repeat run bitwise identical" if same else "repeat run differs")


# ---------------------------------------------------------------- benchmark grid (criteria 6 and 7)

PURITY_LEVELS = (0.6, 0.7, 0.8, 0.9, 1.0)
BENCH_PARAMS = AlgoParams(solver=DEFAULT_CFG)


@pytest.fixture(scope="module")
def bench_summary():
    t0 = time.process_time()
    rows = run_grid("sim2", ["misisun"], PURITY_LEVELS, 5, BENCH_PARAMS, base_seed=0, snr_db=30.0)
    rows += run_grid("sim2", ["fasun", "sunsal"], (0.7, 0.9), 5, BENCH_PARAMS, base_seed=0, snr_db=30.0)
    means = {(rec["algo"], rec["condition"]): rec["sre_db_mean"] for rec in aggregate(rows)}
    return means, time.process_time() - t0


def test_criterion_06_ordering(bench_summary):
    means, cpu = bench_summary
    parts, ok = [], cpu < 1800.0
    for rho in (0.7, 0.9):
        m, s, f = (means[(a, f"rho={rho:g}")] for a in ("misisun", "sunsal", "fasun"))
        ok &= m > s
        parts.append(f"rho={rho:g}: misisun {m:.2f} / fasun {f:.2f} / sunsal {s:.2f} dB")
    m7, f7 = means[("misisun", "rho=0.7")], means[("fasun", "rho=0.7")]
    ok &= m7 >= f7 - 0.5
    verdict(6, ok, "; ".join(parts) + f"; grid CPU {cpu:.0f} s")


def test_criterion_07_purity_monotonicity(bench_summary):
    means, _ = bench_summary
    sre = [means[("misisun", f"rho={rho:g}")] for rho in PURITY_LEVELS]
    rho_s = stats.spearmanr(PURITY_LEVELS, sre).statistic
    verdict(7, rho_s > 0, f"Spearman = {rho_s:+.2f} (> 0) over mean SRE "
                          + ", ".join(f"{v:.2f}" for v in sre))


# ---------------------------------------------------------------- simulation and metrics

def test_criterion_08_simulation_invariants():
    _, e, _ = generate_library(SyntheticLibrarySpec(seed=3))
    y, a = generate_sim1(Sim1Spec(seed=4), e)
    n_bg = int((sim1_layout(Sim1Spec()) >= 0).sum())
    sums = np.abs(a.data.sum(axis=0) - 1.0).max()
    y_clean = HsiMatrix(e.data @ a.data)
    noisy = add_noise(y_clean, 25.0, 5)
    snr = 20 * math.log10(np.linalg.norm(y_clean.data) / np.linalg.norm(noisy.data - y_clean.data))
    ok = y.pixel_count == 11025 and n_bg == 1225 and sums <= 1e-12 and a.data.max() <= 0.75 \
        and abs(snr - 25.0) <= 1e-10
    verdict(8, ok, f"pixels {y.pixel_count}, non-background {n_bg}, sum err {sums:.1e}, "
                   f"max {a.data.max():.2f}, SNR error {abs(snr - 25.0):.1e}")


def test_criterion_09_metric_self_tests():
    rng = np.random.default_rng(9)
    a = rng.dirichlet(np.ones(6), size=50).T
    sre = sre_db(a, 0.9 * a)
    u, v = rng.random(30), rng.random(30)
    scale_ok = all(sad_degrees(u, alpha * v) == sad_degrees(u, v) for alpha in (0.5, 2.0, 8.0))
    align_ok = True
    for r in range(2, 9):
        e_ref, e_est = rng.random((25, r)), rng.random((25, r))
        align_ok &= tuple(align_endmembers(e_ref, e_est)) == tuple(brute_force(e_ref, e_est))
    ok = abs(sre - 20.0) <= 1e-12 and scale_ok and align_ok
    verdict(9, ok, f"SRE(A, 0.9A) = {sre:.12f} dB, SAD scale invariant: {scale_ok}, "
                   f"alignment = exhaustive for r = 2..8: {align_ok}")


# ---------------------------------------------------------------- scaling

def test_criterion_11_scaling():
    lib, e, _ = generate_library(SyntheticLibrarySpec(seed=21))
    y, a = generate_sim1(Sim1Spec(seed=22, snr_db=30.0), e)
    big_a = np.tile(a.data.reshape(6, 105, 105), (1, 3, 3)).reshape(6, -1)
    y_big = add_noise(HsiMatrix(e.data @ big_a, spatial_shape=(315, 315)), 30.0, 23)
    cfg = SolverConfig(r=6, T=200)
    times = []
    for data in (y, y_big):
        t0 = time.perf_counter()
        solve_misisun(data, lib, cfg)
        times.append(time.perf_counter() - t0)
    growth = times[1] / times[0]
    verdict(11, growth <= 12.0, f"n = 11025: {times[0]:.1f} s, n = 99225: {times[1]:.1f} s, growth {growth:.2f}x (<= 12x)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
