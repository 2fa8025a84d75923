"""Command-line front end.

Commands::

    rowprox generate   --n 32 --projections 36 --rays 32 --eta 0.08 --seed 0 --out prob/
    rowprox solve      --problem prob/ --method damped-art --t0 rowmax:0.1 --cycles 8 --out run/
    rowprox reference  --problem prob/ --lambda 0,1,10 --out ref/
    rowprox boundcheck --cases 100 --rho 0.3,1,1.7 --out bound/
    rowprox replay     run/manifest.json --out run2/

Every command writes ``manifest.json`` next to its outputs; ``replay``
re-executes a manifest and reproduces the CSV outputs byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io, kernels
from .exceptions import DivergenceError
from .prox import ConstraintSet
from .reference import solve_tv_ls, tv_ls_objective
from .ripg import ConstantStep, Cyclic, DiminishingStep, RandomControl, Shuffled, relative_error
from .rowaction import METHODS, MethodSpec, reconstruct
from .sparsela import BlockPartition, row_sqnorms
from .theory import beta, random_suite
from .tomo import Geometry, make_sinogram
from .tv import build_diff_operator

__all__ = ["cmd_boundcheck", "cmd_generate", "cmd_reference", "cmd_solve", "main"]


class UsageError(ValueError):
    """Invalid parameter combination detected after argument parsing."""


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_manifest(out: Path, command: str, params: dict, outputs: list, **extra):
    manifest = {
        "command": command,
        "params": params,
        "outputs": sorted(outputs),
        "version": _version(),
        "backend": kernels.BACKEND,
    }
    manifest.update(extra)
    io.write_json(out / "manifest.json", manifest)
    return manifest


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    return out


# --- generate ----------------------------------------------------------------


def cmd_generate(params: dict) -> dict:
    """Write a problem bundle for the given geometry, noise level and seed."""
    out = _out_dir(params["out"])
    geometry = Geometry(params["n"], params["projections"], params["rays"], params["pixel_size"])
    problem = make_sinogram(geometry, params["eta"], params["seed"])
    meta = io.save_problem(out, problem)
    outputs = ["meta.json", *meta["files"].values()]
    return _write_manifest(out, "generate", params, outputs)


# --- solve -------------------------------------------------------------------


def parse_t0(text, A) -> float:
    """A positive number, or ``rowmax:c`` meaning ``1 / (c * max_i ||a_i||^2)``."""
    text = str(text)
    rowmax = text.startswith("rowmax:")
    try:
        value = float(text.split(":", 1)[1] if rowmax else text)
    except ValueError:
        raise UsageError(f"--t0 must be a number or rowmax:c, got {text!r}") from None
    if rowmax:
        if not value > 0:
            raise UsageError("rowmax factor must be positive")
        return 1.0 / (value * float(np.max(row_sqnorms(A))))
    t = value
    if not t > 0:
        raise UsageError("--t0 must be positive")
    return t


def _schedule(name, t0):
    if name == "constant":
        return ConstantStep(t0)
    if name == "diminishing":
        return DiminishingStep(t0)
    raise UsageError(f"unknown schedule {name!r}")


def _control(name, seed):
    return {"cyclic": Cyclic(), "random": RandomControl(seed), "shuffled": Shuffled(seed)}[name]


def _partition(blocks, problem):
    nrows = problem.A.nrows
    if blocks in (None, "projections"):
        return BlockPartition.uniform(nrows, problem.geometry.p)
    k = int(blocks)
    if not 1 <= k <= nrows:
        raise UsageError(f"--blocks must lie in [1, {nrows}]")
    return BlockPartition.uniform(nrows, k)


def cmd_solve(params: dict) -> dict:
    """Run a row-action method on a bundle and write history, image and manifest."""
    problem = io.load_problem(params["problem"])
    out = _out_dir(params["out"])
    A, b, N = problem.A, problem.b, problem.geometry.N
    t0 = parse_t0(params["t0"], A)
    try:
        spec = MethodSpec(
            kind=params["method"],
            rho=params["rho"],
            schedule=_schedule(params["schedule"], t0),
            control=_control(params["control"], params["seed"]),
            constraint=ConstraintSet.parse(params["constraint"]),
            mu=params["mu"],
            lam=params["lambda"],
            tau=params["tau"],
            tv_mode=params["tv_mode"],
            variant=params["variant"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    block = spec.kind in ("block-kaczmarz", "damped-block", "block-tv")
    partition = _partition(params["blocks"], problem) if block else None
    D = build_diff_operator(N, N) if spec.kind == "block-tv" else None
    trace = reconstruct(
        A, b, spec, params["cycles"], reference=problem.x_exact, partition=partition, D=D,
        snapshot_stride=params["snapshot_stride"], stop_on_divergence=True,
    )
    outputs = ["history.csv", "x.rpv", "x.pgm"]
    io.write_history(out / "history.csv", trace)
    io.write_vector(out / "x.rpv", trace.x)
    scaling = io.write_pgm(out / "x.pgm", io.image_of(trace.x, N))
    if params["snapshot_stride"]:
        (out / "snapshots").mkdir(exist_ok=True)
        for cycle, snap in sorted(trace.snapshots.items()):
            name = f"snapshots/cycle_{cycle:05d}.rpv"
            io.write_vector(out / name, snap)
            outputs.append(name)
    best_cycle, best_err = trace.best()
    return _write_manifest(
        out, "solve", params, outputs,
        t0_resolved=t0,
        diverged=trace.diverged_at is not None,
        diverged_at_step=trace.diverged_at,
        best_cycle=best_cycle,
        best_relative_error=best_err,
        preview_scaling=scaling,
    )


# --- reference ---------------------------------------------------------------


def cmd_reference(params: dict) -> dict:
    """Primal-dual reference solutions over a grid of regularization parameters."""
    problem = io.load_problem(params["problem"])
    out = _out_dir(params["out"])
    A, b, N = problem.A, problem.b, problem.geometry.N
    C = ConstraintSet.parse(params["constraint"])
    D = build_diff_operator(N, N)
    lams = params["lambda"]
    if not lams:
        raise UsageError("need at least one lambda")
    rows = ["lambda,relative_error,objective,iterations,converged,residual"]
    outputs = ["summary.csv", "summary.json"]
    entries = []
    for i, lam in enumerate(lams):
        res = solve_tv_ls(A, b, D, lam, C, seed=params["seed"],
                          max_iters=params["max_iters"], tol=params["tol"])
        err = relative_error(res.x, problem.x_exact)
        obj = tv_ls_objective(A, b, D, lam, res.x)
        sub = f"lambda_{i:03d}"
        (out / sub).mkdir(exist_ok=True)
        io.write_vector(out / sub / "x.rpv", res.x)
        io.write_pgm(out / sub / "x.pgm", io.image_of(res.x, N))
        outputs += [f"{sub}/x.rpv", f"{sub}/x.pgm"]
        rows.append(
            f"{io._fmt(lam)},{io._fmt(err)},{io._fmt(obj)},{res.iterations},"
            f"{int(res.converged)},{io._fmt(res.residual)}"
        )
        entries.append({"lambda": lam, "relative_error": err, "objective": obj,
                        "iterations": res.iterations, "converged": res.converged, "dir": sub})
    (out / "summary.csv").write_text("\n".join(rows) + "\n", encoding="ascii")
    best = min(entries, key=lambda e: e["relative_error"])
    io.write_json(out / "summary.json", {"best": best, "entries": entries})
    return _write_manifest(out, "reference", params, outputs, best_lambda=best["lambda"])


# --- boundcheck --------------------------------------------------------------


def cmd_boundcheck(params: dict) -> dict:
    """Per-cycle bound check on a seeded random suite; writes a pass/fail table."""
    out = _out_dir(params["out"])
    rhos, variants, m = params["rho"], params["variants"], params["m"]
    cases = random_suite(params["cases"], rhos, variants, m, params["n"], params["t"],
                         params["cycles"], params["seed"])
    header = [f"# m={m} n={params['n']} t={float(params['t'])!r} cases={params['cases']}"]
    for v in variants:
        for rho in rhos:
            header.append(f"# variant={v} rho={float(rho)!r} beta={beta(rho, m, v)!r}")
    lines = header + ["case,variant,rho,lhs,rhs,c_empirical,slack,holds"]
    for c in cases:
        w = c.worst
        lines.append(
            f"{c.case},{c.variant},{io._fmt(c.rho)},{io._fmt(w.lhs)},{io._fmt(w.rhs)},"
            f"{io._fmt(w.c_empirical)},{io._fmt(w.slack)},{int(w.holds)}"
        )
    (out / "report.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    failures = sum(not c.worst.holds for c in cases)
    return _write_manifest(out, "boundcheck", params, ["report.csv"],
                           total=len(cases), failures=failures)


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "reference": cmd_reference,
    "boundcheck": cmd_boundcheck,
}


def replay(manifest_path, out=None) -> dict:
    """Re-run the command recorded in a manifest (optionally into another directory)."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    params = dict(manifest["params"])
    if out is not None:
        params["out"] = str(out)
    return COMMANDS[manifest["command"]](params)


# --- argument parsing --------------------------------------------------------


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _constraint(text):
    try:
        ConstraintSet.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rowprox", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a tomography problem bundle")
    g.add_argument("--n", type=int, required=True, help="image side N")
    g.add_argument("--projections", type=int, required=True)
    g.add_argument("--rays", type=int, required=True)
    g.add_argument("--eta", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pixel-size", dest="pixel_size", type=float, default=1.0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run a row-action method on a bundle")
    s.add_argument("--problem", required=True)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--t0", default="1.0", help="step size, or rowmax:c for 1/(c max ||a_i||^2)")
    s.add_argument("--schedule", choices=("constant", "diminishing"), default="constant")
    s.add_argument("--control", choices=("cyclic", "random", "shuffled"), default="cyclic")
    s.add_argument("--seed", type=int, default=0, help="seed for random and shuffled control")
    s.add_argument("--cycles", type=int, default=10)
    s.add_argument("--lambda", dest="lambda_", type=float, default=0.0)
    s.add_argument("--tau", type=float, default=1e-4)
    s.add_argument("--blocks", default="projections", help="'projections' or a block count")
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--variant", choices=("ripg1", "ripg2"), default="ripg1")
    s.add_argument("--constraint", type=_constraint, default="none")
    s.add_argument("--tv-mode", dest="tv_mode", choices=("subgrad", "prox"), default="subgrad")
    s.add_argument("--snapshot-stride", dest="snapshot_stride", type=int, default=0)
    s.add_argument("--out", required=True)

    r = sub.add_parser("reference", help="primal-dual reference solutions over a lambda grid")
    r.add_argument("--problem", required=True)
    r.add_argument("--lambda", dest="lambda_", type=_float_list, required=True,
                   help="comma-separated regularization parameters")
    r.add_argument("--constraint", type=_constraint, default="nonneg")
    r.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    r.add_argument("--tol", type=float, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)

    b = sub.add_parser("boundcheck", help="check the per-cycle bound on random problems")
    b.add_argument("--cases", type=int, default=100)
    b.add_argument("--rho", type=_float_list, default=[0.3, 1.0, 1.7])
    b.add_argument("--variant", choices=("ripg1", "ripg2", "both"), default="both")
    b.add_argument("--m", type=int, default=5, help="number of components")
    b.add_argument("--n", type=int, default=3, help="ambient dimension")
    b.add_argument("--t0", type=float, default=0.01, help="constant step size")
    b.add_argument("--cycles", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run a saved manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    return parser


def params_from_args(args) -> dict:
    cmd = args.command
    if cmd == "generate":
        return {"n": args.n, "projections": args.projections, "rays": args.rays, "eta": args.eta,
                "seed": args.seed, "pixel_size": args.pixel_size, "out": args.out}
    if cmd == "solve":
        return {"problem": str(Path(args.problem).resolve()), "method": args.method,
                "rho": args.rho, "t0": args.t0, "schedule": args.schedule,
                "control": args.control, "seed": args.seed, "cycles": args.cycles,
                "lambda": args.lambda_, "tau": args.tau, "blocks": args.blocks, "mu": args.mu,
                "variant": args.variant, "constraint": args.constraint, "tv_mode": args.tv_mode,
                "snapshot_stride": args.snapshot_stride, "out": args.out}
    if cmd == "reference":
        return {"problem": str(Path(args.problem).resolve()), "lambda": args.lambda_,
                "constraint": args.constraint, "max_iters": args.max_iters, "tol": args.tol,
                "seed": args.seed, "out": args.out}
    variants = ["ripg1", "ripg2"] if args.variant == "both" else [args.variant]
    return {"cases": args.cases, "rho": args.rho, "variants": variants, "m": args.m, "n": args.n,
            "t": args.t0, "cycles": args.cycles, "seed": args.seed, "out": args.out}


def _validate(parser, params, cmd):
    if cmd == "generate":
        checks = [(params["n"] >= 8, "--n must be at least 8"),
                  (params["projections"] >= 1, "--projections must be positive"),
                  (params["rays"] >= 1, "--rays must be positive"),
                  (params["eta"] >= 0, "--eta must be nonnegative")]
    elif cmd == "solve":
        checks = [(params["cycles"] >= 0, "--cycles must be nonnegative"),
                  (0 < params["rho"] < 2, "--rho must lie in (0, 2)"),
                  (params["snapshot_stride"] >= 0, "--snapshot-stride must be nonnegative")]
    elif cmd == "boundcheck":
        checks = [(params["cases"] >= 0, "--cases must be nonnegative"),
                  (params["m"] >= 1, "--m must be positive"),
                  (all(0 < r < 2 for r in params["rho"]), "--rho values must lie in (0, 2)")]
    else:
        checks = []
    for ok, msg in checks:
        if not ok:
            parser.error(msg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            manifest = replay(args.manifest, args.out)
        else:
            params = params_from_args(args)
            _validate(parser, params, args.command)
            manifest = COMMANDS[args.command](params)
    except UsageError as exc:
        parser.error(str(exc))
    except (FileNotFoundError, DivergenceError) as exc:
        print(f"rowprox: error: {exc}", file=sys.stderr)
        return 1
    summary = {k: manifest[k] for k in manifest if k not in ("params", "outputs")}
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
