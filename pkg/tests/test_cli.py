import csv
import math

import numpy as np
import pytest

from misisun.cli import main
from misisun.dataio import DatasetBundle, read_bundle, read_matrix, read_record, write_bundle, write_matrix
from misisun.simulate import Sim2Spec, SyntheticLibrarySpec, generate_library, generate_sim2


def run(*argv):
    return main([str(a) for a in argv])


def test_generate_sim1_dimensions(tmp_path):
    out = tmp_path / "d"
    assert run("generate", "sim1", "--snr", 20, "--seed", 1, "--bands", 20, "--atoms", 10, "--out", out) == 0
    b = read_bundle(out, require_library=True)
    assert b.y.data.shape == (20, 11025)
    assert read_record(out / "manifest.txt")["status"] == "complete"
    assert read_record(out / "meta.txt")["generator"] == "sim1"


def test_generate_rejects_small_rho(tmp_path, capsys):
    assert run("generate", "sim2", "--rho", 0.05, "--out", tmp_path / "d") == 2
    assert "rho must exceed 1/r" in capsys.readouterr().err


def test_generate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("generate", "sim2", "--rho", 0.8, "--seed", 3, "--bands", 15, "--atoms", 8,
                   "--out", tmp_path / name) == 0
    for f in ("Y.csv", "D.csv", "A_true.csv", "E_true.csv", "B_true.csv", "meta.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_unknown_subcommand_and_flags_exit_2(tmp_path):
    assert run("frobnicate") == 2
    assert run("unmix", "--algo", "nope", "--in", tmp_path, "--out", tmp_path) == 2


@pytest.fixture
def small_bundle(tmp_path):
    lib, e, b = generate_library(SyntheticLibrarySpec(bands=30, atoms=12, r=6, seed=2))
    y, a = generate_sim2(Sim2Spec(rho=0.8, snr_db=40.0, seed=3, height=10, width=10), e)
    path = tmp_path / "bundle"
    write_bundle(DatasetBundle(y=y, d=lib, a_true=a, e_true=e, b_true=b, meta={"generator": "sim2"}), path)
    return path


def test_fasun_alias_matches_lambda_zero(tmp_path, small_bundle):
    assert run("unmix", "--algo", "fasun", "--in", small_bundle, "--out", tmp_path / "f", "--r", 6, "--T", 30) == 0
    assert run("unmix", "--algo", "misisun", "--lambda", 0, "--in", small_bundle, "--out", tmp_path / "m",
               "--r", 6, "--T", 30) == 0
    for f in ("A_est.csv", "B_est.csv", "E_est.csv", "objective_trace.csv"):
        assert (tmp_path / "f" / f).read_bytes() == (tmp_path / "m" / f).read_bytes()


def test_unmix_manifest_echoes_default_hyperparameters(tmp_path, small_bundle, capsys):
    out = tmp_path / "u"
    assert run("unmix", "--algo", "misisun", "--in", small_bundle, "--out", out, "--r", 6, "--T", 3) == 0
    man = read_record(out / "manifest.txt")
    assert (man["config.T1"], man["config.T2"]) == ("5", "5")
    assert (float(man["config.mu_a"]), float(man["config.mu_b1"]), float(man["config.mu_b2"])) == (50.0, 2.0, 1.0)
    assert float(man["config.lambda"]) == 0.3
    assert man["config.T"] == "3" and man["status"] == "complete"
    assert read_matrix(out / "objective_trace.csv").shape == (3, 1)
    assert "iterations_run = 3" in capsys.readouterr().out


def test_unmix_full_preset_is_ten_thousand_iterations():
    from misisun.cli import PRESETS, build_parser

    args = build_parser().parse_args(["unmix", "--algo", "misisun", "--in", "x", "--out", "y", "--r", "6"])
    assert PRESETS[args.preset] == 10000 and args.T is None


def test_unmix_r_exceeding_library_exits_2(tmp_path, small_bundle):
    assert run("unmix", "--algo", "misisun", "--in", small_bundle, "--out", tmp_path / "u", "--r", 13) == 2


def test_fclsu_without_endmembers_exits_2(tmp_path, small_bundle):
    (small_bundle / "E_true.csv").unlink()
    assert run("unmix", "--algo", "fclsu", "--in", small_bundle, "--out", tmp_path / "u") == 2


def test_missing_library_exits_2(tmp_path, small_bundle, capsys):
    (small_bundle / "D.csv").unlink()
    assert run("unmix", "--algo", "misisun", "--in", small_bundle, "--out", tmp_path / "u", "--r", 6) == 2
    assert "library required" in capsys.readouterr().err


def test_missing_input_dir_is_usage_error(tmp_path):
    assert run("unmix", "--algo", "sunsal", "--in", tmp_path / "absent", "--out", tmp_path / "u") == 2


def test_eval_exact_and_scaled_estimates(tmp_path, small_bundle, capsys):
    est = tmp_path / "est"
    a = read_matrix(small_bundle / "A_true.csv")
    write_matrix(a, est / "A_est.csv")
    write_matrix(read_matrix(small_bundle / "E_true.csv"), est / "E_est.csv")
    assert run("eval", "--est", est, "--truth", small_bundle) == 0
    rec = read_record(est / "metrics.txt")
    assert rec["sre_db"] == "inf" and all(float(rec[f"sad_degrees_{k}"]) == 0.0 for k in range(6))
    write_matrix(0.9 * a, est / "A_est.csv")
    assert run("eval", "--est", est, "--truth", small_bundle) == 0
    assert "sre_db = 20.000000" in capsys.readouterr().out


def test_eval_align_handles_permuted_endmembers(tmp_path, small_bundle):
    est = tmp_path / "est"
    perm = np.array([2, 0, 5, 1, 4, 3])
    write_matrix(read_matrix(small_bundle / "A_true.csv")[perm], est / "A_est.csv")
    write_matrix(read_matrix(small_bundle / "E_true.csv")[:, perm], est / "E_est.csv")
    assert run("eval", "--est", est, "--truth", small_bundle, "--align") == 0
    rec = read_record(est / "metrics.txt")
    assert rec["sre_db"] == "inf"
    assert all(float(rec[f"sad_degrees_{k}"]) == 0.0 for k in range(6))


def test_eval_shape_mismatch_exits_2(tmp_path, small_bundle):
    write_matrix(np.ones((3, 4)), tmp_path / "est" / "A_est.csv")
    assert run("eval", "--est", tmp_path / "est", "--truth", small_bundle) == 2


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bench_fclsu_noise_free_recovery(tmp_path):
    out = tmp_path / "res.csv"
    assert run("bench", "--suite", "sim2", "--rho-list", 1.0, "--algos", "fclsu", "--repeats", 1, "--snr", "inf",
               "--out", out) == 0
    rows = read_csv(out)
    assert len(rows) == 1 and float(rows[0]["sre_db"]) >= 50.0
    assert "base_seed" not in rows[0] and rows[0]["cell_seed"]
    assert read_record(tmp_path / "res_manifest.txt")["status"] == "complete"


def test_bench_aggregate_rows_and_ordering(tmp_path):
    out = tmp_path / "res.csv"
    assert run("bench", "--suite", "sim2", "--rho-list", "0.7", "--algos", "misisun,sunsal", "--repeats", 2,
               "--bands", 60, "--atoms", 20, "--T", 300, "--out", out) == 0
    assert len(read_csv(out)) == 4
    summary = read_csv(tmp_path / "res_summary.csv")
    assert len(summary) == 2
    means = {row["algo"]: float(row["sre_db_mean"]) for row in summary}
    assert means["misisun"] > means["sunsal"]
    assert all(math.isfinite(float(row["sre_db_std"])) for row in summary)


def test_bench_unknown_algo_exits_2(tmp_path):
    assert run("bench", "--suite", "sim2", "--algos", "misisun,bogus", "--out", tmp_path / "r.csv") == 2


def test_bench_r_exceeding_atoms_exits_2(tmp_path):
    assert run("bench", "--suite", "sim2", "--algos", "fclsu", "--atoms", 4, "--out", tmp_path / "r.csv") == 2


def test_zero_init_jitter_is_recorded(tmp_path, small_bundle):
    out = tmp_path / "u"
    assert run("unmix", "--algo", "misisun", "--in", small_bundle, "--out", out, "--r", 6, "--T", 2,
               "--init-jitter", 0) == 0
    assert float(read_record(out / "manifest.txt")["config.init_jitter"]) == 0.0
    assert run("unmix", "--algo", "misisun", "--in", small_bundle, "--out", out, "--r", 6,
               "--init-jitter", -1) == 2
