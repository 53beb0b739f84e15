import itertools

import numpy as np
import pytest

from misisun.baselines import SunsalConfig, soft_threshold, solve_nnls, solve_sunsal
from misisun.types import DimensionError, HsiMatrix, SpectralLibrary


@pytest.fixture
def instance(rng):
    # tall library so the nonnegative least-squares solution is unique
    d = rng.random((20, 10))
    x = np.zeros((10, 15))
    for k in range(15):
        idx = rng.choice(10, size=3, replace=False)
        x[idx, k] = rng.random(3)
    return SpectralLibrary(d), HsiMatrix(d @ x + 0.01 * rng.standard_normal((20, 15)))


def test_soft_threshold_enumeration():
    for v, tau, want in [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0), (0.5, 1.0, 0.0), (-1.0, 1.0, 0.0), (2.0, 0.0, 2.0)]:
        assert soft_threshold(np.array(v), tau) == want


def test_lambda_zero_matches_nnls(instance):
    lib, y = instance
    ref = solve_nnls(y, lib).data
    z = solve_sunsal(y, lib, SunsalConfig(lambda_l1=0.0, mu=1.0, iters=20000)).data
    assert np.abs(z - ref).max() <= 1e-4


def test_unconstrained_lambda_zero_is_least_squares_fixed_point(rng):
    d = rng.random((12, 5))
    y = HsiMatrix(rng.random((12, 4)))
    z = solve_sunsal(y, SpectralLibrary(d), SunsalConfig(lambda_l1=0.0, mu=1.0, iters=3000, enforce_anc=False)).data
    ols = np.linalg.lstsq(d, y.data, rcond=None)[0]
    np.testing.assert_allclose(z, ols, atol=1e-8)


def test_huge_lambda_zeroes_everything(instance):
    lib, y = instance
    z = solve_sunsal(y, lib, SunsalConfig(lambda_l1=1e6, iters=50)).data
    assert np.all(z == 0.0)


def _small_instance(seed):
    rng = np.random.default_rng(seed)
    d = rng.random((20, 10))
    x = np.zeros((10, 3))
    for k in range(3):
        x[rng.choice(10, size=3, replace=False), k] = rng.random(3)
    return SpectralLibrary(d), HsiMatrix(d @ x + 0.01 * rng.standard_normal((20, 3)))


LAMBDAS = (0.0, 0.01, 0.1, 1.0)


def test_support_shrinks_with_lambda_for_orthonormal_library(rng):
    # with orthonormal atoms the solution is a per-coordinate soft threshold
    q, _ = np.linalg.qr(rng.standard_normal((20, 10)))
    lib = SpectralLibrary(q)
    y = HsiMatrix(q @ (rng.random((10, 4)) * rng.integers(0, 2, (10, 4))))
    supports = [int((solve_sunsal(y, lib, SunsalConfig(lambda_l1=lam, mu=1.0, iters=3000)).data > 1e-8).sum())
                for lam in LAMBDAS]
    assert all(a >= b for a, b in itertools.pairwise(supports))
    assert supports[0] > supports[-1]


@pytest.mark.parametrize("seed", range(20))
def test_l1_norm_nonincreasing_in_lambda(seed):
    lib, y = _small_instance(seed)
    norms = [np.abs(solve_sunsal(y, lib, SunsalConfig(lambda_l1=lam, mu=1.0, iters=5000)).data).sum()
             for lam in LAMBDAS]
    assert all(a >= b - 1e-9 for a, b in itertools.pairwise(norms))


def test_asc_variant_sums_to_one(instance):
    lib, y = instance
    z = solve_sunsal(y, lib, SunsalConfig(enforce_asc=True, iters=300)).data
    np.testing.assert_allclose(z.sum(axis=0), 1.0, atol=1e-12)
    assert z.min() >= 0.0


def test_nonnegative_output(instance):
    lib, y = instance
    assert solve_sunsal(y, lib).data.min() >= 0.0


def test_band_mismatch_rejected(instance):
    lib, _ = instance
    with pytest.raises(DimensionError):
        solve_sunsal(HsiMatrix(np.ones((21, 2))), lib)
    with pytest.raises(DimensionError):
        solve_nnls(HsiMatrix(np.ones((21, 2))), lib)


@pytest.mark.parametrize("kwargs", [{"iters": 0}, {"lambda_l1": -1.0}, {"mu": 0.0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SunsalConfig(**kwargs)


def test_noise_free_sparse_recovery(rng):
    d = rng.random((20, 10))
    x = np.zeros((10, 6))
    for k in range(6):
        x[rng.choice(10, size=2, replace=False), k] = rng.random(2) + 0.1
    y, lib = HsiMatrix(d @ x), SpectralLibrary(d)
    z = solve_sunsal(y, lib, SunsalConfig(lambda_l1=0.0, mu=1.0, iters=20000)).data
    assert np.abs(z - x).max() <= 1e-4
    assert np.abs(z - solve_nnls(y, lib).data).max() <= 1e-4
