"""Semisupervised hyperspectral unmixing with a library-based archetypal model."""

__version__ = "0.1.0"

from .baselines import SunsalConfig, solve_nnls, solve_sunsal
from .metrics import MetricReport, align_endmembers, reconstruction_rmse, sad_degrees, sre_db
from .quec import QuecFactorization, quec_prepare, quec_solve
from .solver import a_step, b_step, solve_fasun, solve_fclsu, solve_misisun
from .types import (
    AbundanceMatrix,
    EndmemberMatrix,
    HsiMatrix,
    MixingMatrix,
    SolveResult,
    SolverConfig,
    SpectralLibrary,
    mean_spectrum,
    objective_misisun,
)

__all__ = [
    "AbundanceMatrix",
    "EndmemberMatrix",
    "HsiMatrix",
    "MetricReport",
    "MixingMatrix",
    "QuecFactorization",
    "SolveResult",
    "SolverConfig",
    "SpectralLibrary",
    "SunsalConfig",
    "a_step",
    "align_endmembers",
    "b_step",
    "mean_spectrum",
    "objective_misisun",
    "quec_prepare",
    "quec_solve",
    "reconstruction_rmse",
    "sad_degrees",
    "solve_fasun",
    "solve_fclsu",
    "solve_misisun",
    "solve_nnls",
    "solve_sunsal",
    "sre_db",
]
