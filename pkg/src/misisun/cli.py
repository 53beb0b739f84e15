"""Batch command line: ``misisun generate|unmix|eval|bench``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import math
import shlex
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import SunsalConfig, solve_sunsal
from .dataio import (
    BundleError,
    DatasetBundle,
    MatrixParseError,
    atomic_write_text,
    read_bundle,
    read_matrix,
    write_bundle,
    write_matrix,
    write_record,
)
from .experiments import QUICK_T, AlgoParams, aggregate, derive_seed, run_grid
from .metrics import evaluate, reconstruction_rmse, sre_db
from .quec import QuecConditioningError
from .simulate import (
    InfeasiblePurityError,
    Sim1Spec,
    Sim2Spec,
    SyntheticLibrarySpec,
    generate_library,
    generate_sim1,
    generate_sim2,
)
from .solver import INIT_JITTER, SolverDivergence, solve_fclsu, solve_misisun
from .types import EndmemberMatrix, SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
PRESETS = {"full": 10000, "quick": QUICK_T}


class UsageError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: object = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    status: str = "running"

    def record(self) -> dict:
        rec = {
            "tool": "misisun",
            "version": __version__,
            "command": self.command,
            "command_line": " ".join(shlex.quote(a) for a in self.argv),
            "seed": self.seed,
            "status": self.status,
            "started": self.started,
            "finished": self.finished,
        }
        rec.update({f"config.{k}": v for k, v in self.config.items()})
        rec.update({f"input.{k}": v for k, v in self.inputs.items()})
        rec.update({f"output.{k}": v for k, v in self.outputs.items()})
        return rec

    def begin(self, path: Path) -> None:
        self.started = _now()
        write_record(self.record(), path)

    def finish(self, path: Path) -> None:
        self.finished = _now()
        self.status = "complete"
        write_record(self.record(), path)


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _float_or_inf(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(record: dict, stream=None) -> None:
    stream = stream or sys.stdout
    for k, v in record.items():
        print(f"{k} = {v}", file=stream)


# ---------------------------------------------------------------- generate

def cmd_generate(args, argv) -> int:
    out = Path(args.out)
    lib_seed = derive_seed(args.seed, "library")
    scene_seed = derive_seed(args.seed, args.kind, "scene")
    r = args.r
    if args.kind == "sim2" and not (1.0 / r < args.rho <= 1.0):
        raise UsageError(f"rho must exceed 1/r = {1.0 / r:.4f} (and be <= 1), got {args.rho}")
    if args.kind in ("sim1", "sim2") and r != 6:
        raise UsageError("sim1 and sim2 are defined for r = 6 endmembers")
    if args.atoms < r:
        raise UsageError(f"--atoms {args.atoms} must be >= --r {r}")
    manifest = RunManifest(
        command=f"generate {args.kind}", argv=argv, seed=args.seed,
        config={"snr_db": args.snr, "rho": args.rho if args.kind == "sim2" else "", "bands": args.bands,
                "atoms": args.atoms, "r": r, "smoothness": args.smoothness, "library_seed": lib_seed,
                "scene_seed": scene_seed},
        outputs={"bundle": str(out)},
    )
    out.mkdir(parents=True, exist_ok=True)
    manifest.begin(out / "manifest.txt")

    lib, e_true, b_true = generate_library(SyntheticLibrarySpec(
        bands=args.bands, atoms=args.atoms, r=r, smoothness=args.smoothness, seed=lib_seed))
    y = a_true = None
    if args.kind == "sim1":
        y, a_true = generate_sim1(Sim1Spec(snr_db=args.snr, seed=scene_seed), e_true)
    elif args.kind == "sim2":
        y, a_true = generate_sim2(Sim2Spec(rho=args.rho, snr_db=args.snr, seed=scene_seed), e_true)
    meta = {"generator": args.kind, "version": __version__, "seed": args.seed,
            "snr_db": args.snr if args.kind != "library" else "", "library_seed": lib_seed}
    if args.kind == "sim2":
        meta["rho"] = args.rho
    write_bundle(DatasetBundle(y=y, d=lib, a_true=a_true, e_true=e_true, b_true=b_true, meta=meta), out)
    manifest.finish(out / "manifest.txt")
    summary = {"bundle": str(out), "p": lib.band_count, "m": lib.atom_count, "r": r}
    if y is not None:
        summary["n"] = y.pixel_count
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------- unmix

def _solver_config(args) -> SolverConfig:
    T = args.T if args.T is not None else PRESETS[args.preset]
    lam = 0.0 if args.algo == "fasun" else args.lam
    return SolverConfig(r=args.r, T=T, T1=args.t1, T2=args.t2, mu_a=args.mu_a, mu_b1=args.mu_b1,
                        mu_b2=args.mu_b2, lam=lam, seed=args.seed, tol_obj=args.tol_obj)


def cmd_unmix(args, argv) -> int:
    src, out = Path(args.inp), Path(args.out)
    bundle = read_bundle(src, require_library=args.algo != "fclsu")
    y = bundle.require_data(src)
    cfg = None
    config: dict = {"algo": args.algo}
    if args.algo in ("misisun", "fasun"):
        if args.r is None:
            raise UsageError("--r is required for misisun/fasun")
        if args.r > bundle.d.atom_count:
            raise UsageError(f"--r {args.r} exceeds library atom count {bundle.d.atom_count}")
        if args.init_jitter < 0:
            raise UsageError("--init-jitter must be >= 0")
        cfg = _solver_config(args)
        config.update(cfg.as_dict())
        config["asc_renormalize"] = args.asc_renormalize
        config["init_jitter"] = args.init_jitter
    elif args.algo == "fclsu":
        if args.endmembers:
            e = EndmemberMatrix(read_matrix(args.endmembers))
        elif bundle.e_true is not None:
            e = bundle.e_true
        else:
            raise UsageError("fclsu needs endmembers: pass --endmembers PATH or provide E_true.csv")
        if e.band_count != y.band_count:
            raise UsageError(f"endmembers have {e.band_count} bands, data has {y.band_count}")
        config.update({"mu_a": args.mu_a, "iters": args.iters, "r": e.r})
    else:
        scfg = SunsalConfig(lambda_l1=args.lambda_l1, mu=args.sunsal_mu, iters=args.iters,
                            enforce_asc=args.asc_renormalize)
        config.update({"lambda_l1": scfg.lambda_l1, "mu": scfg.mu, "iters": scfg.iters,
                       "enforce_asc": scfg.enforce_asc, "enforce_anc": scfg.enforce_anc})

    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="unmix", argv=argv, config=config, seed=args.seed,
                           inputs={"bundle": str(src), "endmembers": args.endmembers or ""},
                           outputs={"dir": str(out)})
    manifest.begin(out / "manifest.txt")

    summary: dict = {"algo": args.algo}
    if cfg is not None:
        res = solve_misisun(y, bundle.d, cfg, asc_renormalize=args.asc_renormalize, jitter=args.init_jitter)
        write_matrix(res.abundances.data, out / "A_est.csv")
        write_matrix(res.mixing.data, out / "B_est.csv")
        write_matrix(res.endmembers.data, out / "E_est.csv")
        write_matrix(res.objective_trace, out / "objective_trace.csv")
        summary.update({
            "iterations_run": res.iterations_run,
            "objective_first": repr(float(res.objective_trace[0])),
            "objective_last": repr(float(res.objective_trace[-1])),
            "b_sum_residual": f"{res.b_residual:.3e}",
            "wall_time_seconds": f"{res.wall_time_seconds:.3f}",
            "rmse": f"{reconstruction_rmse(y, res.endmembers, res.abundances):.6g}",
        })
        a_est, e_est, trace = res.abundances.data, res.endmembers.data, res.objective_trace
    elif args.algo == "fclsu":
        a = solve_fclsu(y, e, args.mu_a, args.iters)
        write_matrix(a.data, out / "A_est.csv")
        write_matrix(e.data, out / "E_est.csv")
        summary["rmse"] = f"{reconstruction_rmse(y, e, a):.6g}"
        a_est, e_est, trace = a.data, e.data, None
    else:
        x = solve_sunsal(y, bundle.d, scfg)
        write_matrix(x.data, out / "A_est.csv")
        summary["rmse"] = f"{reconstruction_rmse(y, bundle.d.data, x):.6g}"
        summary["active_atoms"] = int(np.count_nonzero(x.data.max(axis=1) > 1e-6))
        a_est, e_est, trace = x.data, None, None
    write_record(summary, out / "summary.txt")

    if args.plot:
        from . import plotting

        figs = out / "figures"
        if y.spatial_shape is not None and a_est.shape[0] <= 24:
            plotting.plot_abundance_maps(a_est, y.spatial_shape, figs / "abundances.png")
        if e_est is not None:
            ref = None
            if bundle.e_true is not None and bundle.e_true.data.shape == e_est.shape:
                from .metrics import align_endmembers

                perm = align_endmembers(bundle.e_true, e_est) if e_est.shape[1] <= 12 else None
                if perm is not None:
                    ref = bundle.e_true.data[:, np.argsort(perm)]
            plotting.plot_endmembers(e_est, figs / "endmembers.png", e_ref=ref)
        if trace is not None:
            plotting.plot_objective_trace(trace, figs / "objective.png")

    manifest.finish(out / "manifest.txt")
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------- eval

def cmd_eval(args, argv) -> int:
    est, truth_dir = Path(args.est), Path(args.truth)
    truth = read_bundle(truth_dir)
    if truth.a_true is None:
        raise UsageError(f"{truth_dir} has no A_true.csv")
    a_est = read_matrix(est / "A_est.csv")
    e_est = read_matrix(est / "E_est.csv") if (est / "E_est.csv").is_file() else None
    b_est = read_matrix(est / "B_est.csv") if (est / "B_est.csv").is_file() else None
    a_true = truth.a_true.data
    e_true = truth.e_true.data if truth.e_true is not None else None
    b_true = truth.b_true.data if truth.b_true is not None else None

    if a_est.shape == a_true.shape:
        if e_est is not None and e_true is not None and e_est.shape != e_true.shape:
            raise UsageError(f"shape mismatch: E_est {e_est.shape} vs E_true {e_true.shape}")
        if b_est is not None and b_true is not None and b_est.shape != b_true.shape:
            b_est = None
        report = evaluate(a_true, a_est, e_true=e_true, e_est=e_est, y=truth.y if e_est is not None else None,
                          align=args.align, b_true=b_true, b_est=b_est)
        record = report.to_record()
    elif b_true is not None and a_est.shape == (b_true.shape[0], a_true.shape[1]):
        # full-library estimate: score against B_true A_true
        record = {"sre_db": _fmt(sre_db(b_true @ a_true, a_est)), "space": "library"}
        if truth.y is not None and truth.d is not None:
            record["rmse"] = _fmt(reconstruction_rmse(truth.y, truth.d, a_est))
    else:
        raise UsageError(f"shape mismatch: A_est {a_est.shape} vs A_true {a_true.shape}")
    out = Path(args.out) if args.out else est / "metrics.txt"
    write_record(record, out)
    _emit(record)
    return EXIT_OK


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


# ---------------------------------------------------------------- bench

def cmd_bench(args, argv) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    unknown = [a for a in algos if a not in ("misisun", "fasun", "fclsu", "sunsal")]
    if unknown or not algos:
        raise UsageError(f"unknown algorithm(s): {', '.join(unknown) or '(none)'}")
    if args.suite == "sim1":
        conditions = args.snr_list or [20.0, 30.0, 40.0]
    else:
        conditions = args.rho_list or [0.6, 0.7, 0.8, 0.9, 1.0]
        bad = [c for c in conditions if not (1.0 / args.r < c <= 1.0)]
        if bad:
            raise UsageError(f"rho must exceed 1/r = {1.0 / args.r:.4f}: {bad}")
    if args.r > args.atoms:
        raise UsageError(f"--r {args.r} exceeds library atom count {args.atoms}")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    T = args.T if args.T is not None else PRESETS[args.preset]
    solver = SolverConfig(r=args.r, T=T, T1=args.t1, T2=args.t2, mu_a=args.mu_a, mu_b1=args.mu_b1,
                          mu_b2=args.mu_b2, lam=args.lam, seed=args.seed)
    params = AlgoParams(solver=solver, sunsal=SunsalConfig(lambda_l1=args.lambda_l1, mu=args.sunsal_mu,
                                                           iters=args.iters),
                        fclsu_iters=args.iters)
    out = Path(args.out)
    summary_path = out.with_name(out.stem + "_summary.csv")
    manifest_path = out.with_name(out.stem + "_manifest.txt")
    manifest = RunManifest(
        command="bench", argv=argv, seed=args.seed,
        config={"suite": args.suite, "algos": ",".join(algos), "conditions": ",".join(f"{c:g}" for c in conditions),
                "repeats": args.repeats, "snr_db": args.snr, **solver.as_dict(),
                "sunsal.lambda_l1": args.lambda_l1, "sunsal.mu": args.sunsal_mu, "iters": args.iters,
                "bands": args.bands, "atoms": args.atoms},
        outputs={"results": str(out), "summary": str(summary_path)},
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.begin(manifest_path)
    rows = run_grid(args.suite, algos, conditions, args.repeats, params, base_seed=args.seed,
                    snr_db=args.snr, bands=args.bands, atoms=args.atoms, r=args.r)
    summary = aggregate(rows)
    _write_csv(rows, out)
    _write_csv(summary, summary_path)
    if args.plot:
        from .plotting import plot_sre_bars

        fig = plot_sre_bars(summary, out.with_suffix(".png"),
                            condition_label="input SNR (dB)" if args.suite == "sim1" else "pixel purity")
        manifest.outputs["figure"] = str(fig)
    manifest.finish(manifest_path)
    for rec in summary:
        print(f"{rec['algo']},{rec['condition']},sre_db_mean={rec['sre_db_mean']:.4f},"
              f"sre_db_std={rec['sre_db_std']:.4f}")
    return EXIT_OK


def _write_csv(rows: list[dict], path: Path) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------- parser

def _add_solver_flags(p, defaults: SolverConfig) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=defaults.lam, help="center-penalty weight")
    p.add_argument("--T", type=int, default=None, help="outer iterations (overrides --preset)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="full",
                   help="full: T=10000; quick: T=1000")
    p.add_argument("--t1", type=int, default=defaults.T1, help="inner A-step iterations")
    p.add_argument("--t2", type=int, default=defaults.T2, help="inner B-step iterations")
    p.add_argument("--mu-a", type=float, default=defaults.mu_a)
    p.add_argument("--mu-b1", type=float, default=defaults.mu_b1)
    p.add_argument("--mu-b2", type=float, default=defaults.mu_b2)
    p.add_argument("--seed", type=int, default=0)
    sdef = SunsalConfig()
    p.add_argument("--lambda-l1", type=float, default=sdef.lambda_l1, help="SUnSAL l1 weight")
    p.add_argument("--sunsal-mu", type=float, default=sdef.mu, help="SUnSAL AL parameter")
    p.add_argument("--iters", type=int, default=2000, help="iterations for fclsu and sunsal")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="misisun", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = SolverConfig(r=6)

    g = sub.add_parser("generate", help="write a synthetic dataset bundle")
    g.add_argument("kind", choices=["sim1", "sim2", "library"])
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--snr", type=_float_or_inf, default=30.0, help="input SNR in dB ('inf' for none)")
    g.add_argument("--rho", type=float, default=1.0, help="pixel purity cap (sim2)")
    g.add_argument("--bands", type=int, default=224)
    g.add_argument("--atoms", type=int, default=60)
    g.add_argument("--r", type=int, default=6)
    g.add_argument("--smoothness", type=float, default=SyntheticLibrarySpec().smoothness)

    u = sub.add_parser("unmix", help="run an unmixing algorithm on a bundle")
    u.add_argument("--algo", choices=["misisun", "fasun", "fclsu", "sunsal"], required=True)
    u.add_argument("--in", dest="inp", required=True)
    u.add_argument("--out", required=True)
    u.add_argument("--r", type=int, default=None)
    u.add_argument("--endmembers", default=None, help="CSV of fixed endmembers for fclsu")
    u.add_argument("--asc-renormalize", action="store_true",
                   help="rescale abundance columns to sum exactly to one")
    u.add_argument("--tol-obj", type=float, default=0.0, help="relative objective change for early stop")
    u.add_argument("--plot", action="store_true", help="render figures into OUT/figures")
    u.add_argument("--init-jitter", type=float, default=INIT_JITTER,
                   help="amplitude of the seeded initial perturbation (0 keeps the exact zero start)")
    _add_solver_flags(u, defaults)

    e = sub.add_parser("eval", help="score estimates against ground truth")
    e.add_argument("--est", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--align", action="store_true", help="match endmembers by minimum total SAD")
    e.add_argument("--out", default=None, help="metrics file (default EST/metrics.txt)")

    b = sub.add_parser("bench", help="seeded repeated experiments, CSV results")
    b.add_argument("--suite", choices=["sim1", "sim2"], required=True)
    b.add_argument("--algos", required=True, help="comma list of misisun,fasun,fclsu,sunsal")
    b.add_argument("--snr-list", type=_float_list, default=None, help="sim1 SNR levels")
    b.add_argument("--rho-list", type=_float_list, default=None, help="sim2 purity levels")
    b.add_argument("--snr", type=_float_or_inf, default=30.0, help="sim2 input SNR")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", required=True)
    b.add_argument("--r", type=int, default=6)
    b.add_argument("--bands", type=int, default=224)
    b.add_argument("--atoms", type=int, default=60)
    b.add_argument("--plot", action="store_true", help="render a bar chart next to the CSV")
    _add_solver_flags(b, defaults)
    b.set_defaults(preset="quick")
    return parser


COMMANDS = {"generate": cmd_generate, "unmix": cmd_unmix, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, ["misisun", *argv])
    except (UsageError, InfeasiblePurityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BundleError, MatrixParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverDivergence, QuecConditioningError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
