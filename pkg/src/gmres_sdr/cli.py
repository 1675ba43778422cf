"""Command-line harness for GMRES-SDR experiments.

Subcommands ``neumann``, ``convdiff``, ``mtx-file`` and ``distortion-trace``
write a metrics table (CSV and aligned text), per-problem convergence CSVs
and a JSON manifest into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .driver import SolveReport, SolverConfig, solve_gmres_baseline, solve_sequence
from .linop import (
    MatrixMarketError,
    ProblemInstance,
    ProblemSequence,
    convdiff_sequence,
    neumann_sequence,
    read_matrix_market,
)
from .recycle import dump_recycle, load_recycle
from .sketch import apply_sketch, identity_sketch, make_sketch

log = logging.getLogger("gmres_sdr")

OUTDIR_ENV = "GMRES_SDR_OUT"
EXIT_OK, EXIT_SOLVER, EXIT_SPEC = 0, 1, 2
SOLVERS = ("sdr", "sgmres", "gmres")

EXPERIMENT_DEFAULTS = {
    "neumann": dict(m=100, t=2, k=20, tol=1e-6, restarts=10, solvers="sdr,gmres"),
    "convdiff": dict(m=80, t=2, k=20, tol=1e-2, restarts=10, solvers="sdr"),
    "mtx-file": dict(m=100, t=2, k=20, tol=1e-6, restarts=10, solvers="sdr"),
    "distortion-trace": dict(m=100, t=2, k=20, s=500, tol=1e-6, restarts=10, solvers="sdr"),
}


class SpecError(Exception):
    """Invalid campaign specification (exit code 2)."""


@dataclass
class CampaignSpec:
    experiment: str
    config: SolverConfig
    out_dir: Path
    solvers: list = field(default_factory=lambda: ["sdr"])
    options: dict = field(default_factory=dict)


@dataclass
class MetricsRow:
    solver: str
    MV: int
    IP: int
    T: float
    converged: int
    problems: int
    sketches: int
    iterations: int

    @classmethod
    def from_reports(cls, solver, reports):
        return cls(
            solver=solver,
            MV=sum(r.matvecs for r in reports),
            IP=sum(r.inner_products for r in reports),
            T=sum(r.elapsed for r in reports),
            converged=sum(r.converged for r in reports),
            problems=len(reports),
            sketches=sum(r.sketches for r in reports),
            iterations=sum(r.iterations for r in reports),
        )


def _fmt(x):
    return "" if x is None else f"{x:.17g}"


def write_convergence_csv(path, report):
    """Columns ``iteration, sres, true_res``; empty cells where nothing was computed."""
    rows = {}
    for it, v in report.sres_history:
        rows.setdefault(it, [None, None])[0] = v
    for it, v in report.true_residual_history:
        rows.setdefault(it, [None, None])[1] = v
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "sres", "true_res"])
        for it in sorted(rows):
            w.writerow([it, _fmt(rows[it][0]), _fmt(rows[it][1])])


def write_metrics(out_dir, rows):
    fields = ["solver", "MV", "IP", "T", "converged", "problems", "sketches", "iterations"]
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([r.solver, r.MV, r.IP, _fmt(r.T), r.converged, r.problems, r.sketches, r.iterations])
    table = [["solver", "MV", "IP", "T", "converged", "sketches", "iterations"]] + [
        [r.solver, f"{r.MV:,}", f"{r.IP:,}", f"{r.T:.2f}", f"{r.converged}/{r.problems}", f"{r.sketches:,}", f"{r.iterations:,}"]
        for r in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(row, widths)) for row in table]
    text = "\n".join(lines) + "\n"
    (out_dir / "metrics.txt").write_text(text)
    return text


def _manifest(spec, results):
    return {
        "experiment": spec.experiment,
        "seed": spec.config.seed,
        "config": spec.config.to_dict(),
        "solvers": spec.solvers,
        "options": {k: v for k, v in spec.options.items() if isinstance(v, (str, int, float, bool, list, type(None)))},
        "versions": {
            "gmres_sdr": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "results": {
            solver: [
                {
                    "label": r.label,
                    "status": r.status,
                    "final_relres": r.final_relres,
                    "matvecs": r.matvecs,
                    "inner_products": r.inner_products,
                    "sketches": r.sketches,
                    "iterations": r.iterations,
                    "cycles": r.cycles,
                    "basis_conditions": r.basis_conditions,
                    "notes": r.notes,
                }
                for r in reps
            ]
            for solver, reps in results.items()
        },
    }


def _build_sequence(spec):
    opt = spec.options
    kind = opt.get("problem") or spec.experiment
    if kind == "neumann":
        return neumann_sequence(opt["grid"], opt["shift"], opt["systems"], seed=spec.config.seed, tol=spec.config.tol)
    if kind == "convdiff":
        return convdiff_sequence(opt["n"], opt["alphas"], tol=spec.config.tol)
    if kind == "mtx-file":
        path = Path(opt["matrix"])
        if not path.is_file():
            raise SpecError(f"matrix file not found: {path}")
        try:
            A = read_matrix_market(path)
        except MatrixMarketError as exc:
            raise SpecError(f"{path}: {exc}") from exc
        if A.nrows != A.ncols:
            raise SpecError("matrix must be square")
        rng = np.random.default_rng(spec.config.seed)
        problems = []
        for i in range(opt["systems"]):
            if opt["rhs"] == "ones":
                b = np.ones(A.nrows)
            elif opt["rhs"] == "random":
                b = rng.standard_normal(A.nrows)
            else:
                raise SpecError(f"unknown rhs {opt['rhs']!r}")
            problems.append(ProblemInstance(A, b, label=f"{path.stem}[{i}]", target_tol=spec.config.tol))
        return ProblemSequence(problems, shared_matrix_flag=True)
    raise SpecError(f"unknown experiment {kind!r}")


def _sketch_for(spec, N, s):
    if spec.options.get("identity_sketch"):
        return identity_sketch(N)
    if s >= N:
        spec.options["sketch_note"] = f"s={s} >= N={N}: identity sketch used"
        return identity_sketch(N)
    return make_sketch(N, s, spec.config.seed)


def run_campaign(spec: CampaignSpec) -> int:
    """Run every selected solver on the experiment and write the artifacts."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    seq = _build_sequence(spec)
    N = seq[0].matrix.nrows
    results = {}
    for solver in spec.solvers:
        if solver == "gmres":
            reps = []
            for prob in seq:
                try:
                    _, rep = solve_gmres_baseline(prob.matrix, prob.rhs, None, spec.config.m, prob.target_tol,
                                                  spec.config.max_restarts, label=prob.label)
                except Exception as exc:
                    log.exception("baseline failed on %s", prob.label)
                    rep = SolveReport(solver="gmres", label=prob.label, status="error", notes=[str(exc)])
                reps.append(rep)
        else:
            cfg = spec.config
            if solver == "sgmres":
                cfg = SolverConfig(**{**cfg.to_dict(), "k": 0})
            S = _sketch_for(spec, N, cfg.s)
            space = None
            if solver == "sdr" and spec.options.get("load_recycle"):
                space = load_recycle(spec.options["load_recycle"])
                if space.U.shape[0] != N or space.SU.shape[0] != S.s:
                    raise SpecError("recycle dump does not match problem/sketch dimensions")
            reps = solve_sequence(seq, cfg, sketch=S, space=space)
            for r in reps:
                r.solver = "gmres-sdr" if solver == "sdr" else "sketched-gmres"
            if solver == "sdr" and spec.options.get("save_recycle") and reps[-1].recycle is not None:
                dump_recycle(reps[-1].recycle, spec.options["save_recycle"])
        results[solver] = reps
        for i, rep in enumerate(reps):
            write_convergence_csv(spec.out_dir / f"convergence_{solver}_{i:03d}.csv", rep)
    rows = [MetricsRow.from_reports(s, reps) for s, reps in results.items()]
    text = write_metrics(spec.out_dir, rows)
    (spec.out_dir / "manifest.json").write_text(json.dumps(_manifest(spec, results), indent=2, default=float))
    print(text, end="")
    failed = any(r.status == "error" for reps in results.values() for r in reps)
    if spec.options.get("strict"):
        failed = failed or any(not r.converged for reps in results.values() for r in reps)
    return EXIT_SOLVER if failed else EXIT_OK


def distortion_trace(spec: CampaignSpec) -> int:
    """Per-iteration sketching distortion of the newest basis vector and the residual.

    Writes ``distortion.csv`` with columns ``iteration, cycle,
    basis_distortion, residual_distortion`` where the distortions are
    ``‖v‖/‖S v‖`` for the basis vector used at that step and
    ``‖r‖/‖S r‖`` for the current sketched-GMRES residual.
    """
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    seq = _build_sequence(spec)
    prob = seq[0]
    A = prob.matrix
    S = _sketch_for(spec, A.nrows, spec.config.s)
    rows = []
    cycle = [0]

    def record(j, y, state, space):
        if j == 1:
            cycle[0] += 1
        r0 = state.beta * state.V_buf[:, 0]
        x = space.U @ y[: space.k] + state.V_buf[:, :j] @ y[space.k :]
        r = r0 - A @ x
        v = state.V_buf[:, j - 1]
        rows.append((
            len(rows) + 1,
            cycle[0],
            float(np.linalg.norm(v) / np.linalg.norm(state.SV_buf[:, j - 1])),
            float(np.linalg.norm(r) / np.linalg.norm(apply_sketch(S, r))),
        ))

    reports = solve_sequence(ProblemSequence([prob]), spec.config, sketch=S, callback=record)
    with open(spec.out_dir / "distortion.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "cycle", "basis_distortion", "residual_distortion"])
        for it, cyc, bd, rd in rows:
            w.writerow([it, cyc, _fmt(bd), _fmt(rd)])
    results = {"sdr": reports}
    for i, rep in enumerate(reports):
        write_convergence_csv(spec.out_dir / f"convergence_sdr_{i:03d}.csv", rep)
    write_metrics(spec.out_dir, [MetricsRow.from_reports("sdr", reports)])
    (spec.out_dir / "manifest.json").write_text(json.dumps(_manifest(spec, results), indent=2, default=float))
    print(f"wrote {len(rows)} rows to {spec.out_dir / 'distortion.csv'}")
    return EXIT_SOLVER if any(r.status == "error" for r in reports) else EXIT_OK


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="gmres-sdr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)

    def common(p, name):
        d = EXPERIMENT_DEFAULTS[name]
        p.add_argument("--m", type=int, default=d["m"], help="max search-space dimension per cycle")
        p.add_argument("--t", type=int, default=d["t"], help="Arnoldi truncation window")
        p.add_argument("--k", type=int, default=d["k"], help="recycle rank")
        p.add_argument("--s", type=int, default=d.get("s"), help="sketch dimension (default 10(m+k))")
        p.add_argument("--tol", type=float, default=d["tol"], help="relative residual target")
        p.add_argument("--safety", type=float, default=1.4)
        p.add_argument("--variant", choices=("reuse", "exact", "inexact"), default="exact")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=d["restarts"], help="max cycles per system")
        p.add_argument("--out", default=None, help=f"output directory (env {OUTDIR_ENV})")
        p.add_argument("--solvers", default=d["solvers"], help=f"comma list from {','.join(SOLVERS)}")
        p.add_argument("--identity-sketch", action="store_true", help="use S = I (testing)")
        p.add_argument("--strict", action="store_true", help="exit 1 if any system fails to converge")
        p.add_argument("--load-recycle", default=None, help="start from a dumped recycle space")
        p.add_argument("--save-recycle", default=None, help="dump the final recycle space")

    p = sub.add_parser("neumann", help="fixed Neumann matrix, random right-hand sides")
    p.add_argument("--grid", type=int, default=103)
    p.add_argument("--shift", type=float, default=1e-4)
    p.add_argument("--systems", type=int, default=50)
    common(p, "neumann")

    p = sub.add_parser("convdiff", help="convection-diffusion sequence with varying convection")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--alphas", type=_floats, default=(0.0, 5.0, 20.0))
    common(p, "convdiff")

    p = sub.add_parser("mtx-file", help="systems with a Matrix Market matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--rhs", default="ones", choices=("ones", "random"))
    p.add_argument("--systems", type=int, default=1)
    common(p, "mtx-file")

    p = sub.add_parser("distortion-trace", help="per-iteration sketching distortion")
    p.add_argument("--problem", choices=("neumann", "convdiff"), default="neumann")
    p.add_argument("--grid", type=int, default=103)
    p.add_argument("--shift", type=float, default=1e-4)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.0)
    common(p, "distortion-trace")
    return parser


def spec_from_args(args) -> CampaignSpec:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    bad = [s for s in solvers if s not in SOLVERS]
    if bad or not solvers:
        raise SpecError(f"unknown solvers {bad}; choose from {SOLVERS}")
    try:
        cfg = SolverConfig(m=args.m, t=args.t, k=args.k, s=args.s, tol=args.tol, safety_init=args.safety,
                           max_restarts=args.restarts, seed=args.seed, variant=args.variant)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    out = args.out or os.environ.get(OUTDIR_ENV) or os.path.join("runs", args.experiment)
    options = {k: v for k, v in vars(args).items()
               if k not in {"m", "t", "k", "s", "tol", "safety", "restarts", "seed", "variant", "out", "solvers", "experiment"}}
    options["alphas"] = list(options["alphas"]) if "alphas" in options else None
    experiment = args.experiment
    if experiment == "distortion-trace":
        options["systems"] = 1
        if args.problem == "convdiff":
            options["alphas"] = [args.alpha]
    return CampaignSpec(experiment, cfg, Path(out), solvers, options)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
        if spec.experiment == "distortion-trace":
            return distortion_trace(spec)
        return run_campaign(spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
