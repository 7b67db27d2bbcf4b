"""Command-line entry point: ``ocstab {solve,subdiff,singular-subdiff,check,sweep,demo}``.

Exit codes: 0 success, 1 invalid input, 2 solver did not converge,
3 pair not certified optimal, 4 a check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NotOptimal, ProblemFileError, StepSingular
from .grid import GridFn, Trajectory
from .io import load_problem, write_atomic, write_json
from .linops import DualElement, T_identity_residual, adjoint_identity_residual
from .ode import integrate_state
from .oracle import ellipse_membership
from .problem import OcProblem, Parameter, check_A5
from .solver import SolveOptions, solve
from .subdiff import compute_singular_subdifferential, compute_subdifferential

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_NOTOPT, EXIT_CHECK = 0, 1, 2, 3, 4
DEMOS = (
    "double_integrator_interior",
    "double_integrator_boundary",
    "double_integrator_outside",
    "double_integrator_c_zero",
    "frozen_dynamics",
)

log = logging.getLogger("ocstab")


def _out_dir(args) -> Path:
    return Path(os.environ.get("OCSTAB_OUT") or args.out)


def _options(args) -> SolveOptions:
    return SolveOptions(max_iters=args.max_iters, tol_opt=args.tol, seed=args.seed)


def _write_solution(out: Path, res) -> dict:
    res.xbar.state.to_csv(out / "xbar.csv")
    res.ubar.to_csv(out / "ubar.csv")
    doc = res.summary()
    doc["files"] = {"xbar": "xbar.csv", "ubar": "ubar.csv"}
    write_json(out / "result.json", doc)
    return doc


def cmd_solve(args, prob: OcProblem, w: Parameter, out: Path) -> int:
    res = solve(prob, w, _options(args))
    doc = _write_solution(out, res)
    print(f"value={doc['value']:.6e} iterations={doc['iterations']} residual={doc['optimality_residual']:.2e} "
          f"flag={doc['boundary_flag']}")
    return EXIT_OK if res.converged else EXIT_NONCONV


def _subdiff_docs(prob, w, res, tol):
    sd = compute_subdifferential(prob, w, res.xbar, res.ubar, tol=tol, optimality_residual=res.optimality_residual)
    ssd = compute_singular_subdifferential(prob, w, res.ubar, tol=tol)
    return sd, ssd


def cmd_subdiff(args, prob: OcProblem, w: Parameter, out: Path) -> int:
    res = solve(prob, w, _options(args))
    _write_solution(out, res)
    try:
        sd, ssd = _subdiff_docs(prob, w, res, args.member_tol)
    except NotOptimal as exc:
        print(f"not optimal: {exc}", file=sys.stderr)
        return EXIT_NOTOPT
    sd.theta_star.to_csv(out / "theta_star.csv")
    sd.u_star.to_csv(out / "u_star.csv")
    sd.adjoint.y.to_csv(out / "adjoint.csv")
    doc = sd.summary()
    doc["files"] = {"theta_star": "theta_star.csv", "u_star": "u_star.csv", "adjoint": "adjoint.csv"}
    write_json(out / "subdiff.json", doc)
    write_json(out / "ssubdiff.json", ssd.summary())
    print(f"subdifferential: {sd.status} alpha*={np.array2string(sd.alpha_star, precision=6)}; "
          f"singular: {ssd.status}")
    if not res.converged:
        return EXIT_NONCONV
    return EXIT_OK


def cmd_singular(args, prob: OcProblem, w: Parameter, out: Path) -> int:
    res = solve(prob, w, _options(args))
    ssd = compute_singular_subdifferential(prob, w, res.ubar, tol=args.member_tol)
    write_json(out / "ssubdiff.json", ssd.summary())
    print(f"singular subdifferential: {ssd.status} (sigma_min Phi(1) = {ssd.sigma_min:.3e})")
    return EXIT_OK if res.converged else EXIT_NONCONV


def _random_smooth(rng, grid, dim):
    t = grid.nodes[:, None]
    freq = rng.uniform(0.5, 3.0, size=dim)
    phase = rng.uniform(0, np.pi, size=dim)
    return GridFn(grid, rng.normal(size=dim) * np.sin(freq * t + phase))


def adjoint_suite(prob: OcProblem, n_trials: int = 20, seed: int = 0) -> tuple[float, float]:
    """Largest M/M* and T/T* identity residuals over random smooth data."""
    rng = np.random.default_rng(seed)
    worst_m = worst_t = 0.0
    for _ in range(n_trials):
        x = Trajectory.from_derivative(rng.normal(size=prob.n), _random_smooth(rng, prob.grid, prob.n))
        u = _random_smooth(rng, prob.grid, prob.m)
        d = DualElement(rng.normal(size=prob.n), _random_smooth(rng, prob.grid, prob.n))
        w = Parameter(rng.normal(size=prob.n), _random_smooth(rng, prob.grid, prob.k))
        worst_m = max(worst_m, adjoint_identity_residual(prob, x, u, d))
        worst_t = max(worst_t, T_identity_residual(prob, w, d))
    return worst_m, worst_t


def convergence_probe(prob: OcProblem, w: Parameter) -> float | None:
    """Ratio of successive x(1) differences on grids N, 2N, 4N (about 4 for a second-order scheme).

    None when the data is time-varying (cannot be regridded) or the scheme is
    exact for this problem.
    """
    try:
        probs = [prob.with_grid(prob.grid.n_steps * f) for f in (1, 2, 4)]
    except ValueError:
        return None
    finals = []
    for p in probs:
        u = GridFn.from_callable(p.grid, lambda t: np.full(p.m, np.cos(np.pi * t)))
        theta = GridFn.from_callable(p.grid, lambda t: np.full(p.k, np.sin(np.pi * t)))
        finals.append(integrate_state(p, u, Parameter(w.alpha, theta)).final())
    d1 = np.linalg.norm(finals[0] - finals[1])
    d2 = np.linalg.norm(finals[1] - finals[2])
    if d2 < 1e-14 * (1 + np.linalg.norm(finals[2])):
        return None
    return float(d1 / d2)


def cmd_check(args, prob: OcProblem, w: Parameter, out: Path) -> int:
    a5 = check_A5(prob.matrices.C)
    adj_m, adj_t = adjoint_suite(prob, seed=args.seed)
    ratio = convergence_probe(prob, w)
    rows = {
        "A5": {"pass": a5.holds, "value": a5.c3, "criterion": "c3 > 1e-10"},
        "adjoint_residual": {"pass": adj_m <= 1e-9, "value": adj_m, "criterion": "<= 1e-9"},
        "T_adjoint_residual": {"pass": adj_t <= 1e-9, "value": adj_t, "criterion": "<= 1e-9"},
        "convergence_ratio": {
            "pass": ratio is None or 3.4 <= ratio <= 4.6,
            "value": ratio,
            "criterion": "in [3.4, 4.6] (null: exact or not regriddable)",
        },
    }
    ok = all(r["pass"] for r in rows.values())
    doc = {"checks": rows, "all_pass": ok, "assumptions_verified": a5.holds}
    write_json(out / "check.json", doc)
    width = max(len(k) for k in rows)
    for name, r in rows.items():
        val = "n/a" if r["value"] is None else f"{r['value']:.3e}"
        print(f"{name:<{width}}  {'PASS' if r['pass'] else 'FAIL'}  {val}  ({r['criterion']})")
    return EXIT_OK if ok else EXIT_CHECK


def parse_alpha_grid(spec: str, n: int) -> list[np.ndarray]:
    """``lo:hi:count`` per coordinate, comma separated; a single entry applies to every coordinate."""
    parts = [p for p in (spec or "").split(",") if p.strip()]
    if not parts:
        raise ProblemFileError("--alpha-grid", "empty grid specification")
    if len(parts) == 1:
        parts = parts * n
    if len(parts) != n:
        raise ProblemFileError("--alpha-grid", f"expected 1 or {n} axis specs, got {len(parts)}")
    axes = []
    for p in parts:
        try:
            lo, hi, count = p.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError:
            raise ProblemFileError("--alpha-grid", f"cannot parse axis {p!r}; expected lo:hi:count") from None
        if count < 1:
            raise ProblemFileError("--alpha-grid", f"axis {p!r} has no points")
        axes.append(np.linspace(lo, hi, count))
    return axes


def _sweep_point(job):
    prob, theta_vals, alpha, opts, tol = job
    w = Parameter(alpha, GridFn(prob.grid, theta_vals))
    try:
        res = solve(prob, w, opts)
    except StepSingular as exc:
        return np.nan, [np.nan] * prob.n, f"error:{exc}"
    try:
        sd = compute_subdifferential(prob, w, res.xbar, res.ubar, tol=tol, optimality_residual=res.optimality_residual)
        status = sd.status if res.converged else "NonConvergence"
        astar = list(sd.alpha_star)
    except NotOptimal:
        status, astar = "NotOptimal", [np.nan] * prob.n
    return res.value, astar, status


def _fmt(v) -> str:
    return "%.17g" % v if isinstance(v, (float, np.floating)) else str(v)


def cmd_sweep(args, prob: OcProblem, w: Parameter, out: Path) -> int:
    axes = parse_alpha_grid(args.alpha_grid, prob.n)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, prob.n)
    opts = _options(args)
    jobs = [(prob, w.theta.values, a, opts, args.member_tol) for a in mesh]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * args.jobs))))
    else:
        results = [_sweep_point(j) for j in jobs]

    two_d = prob.n == 2
    header = [f"alpha{i + 1}" for i in range(prob.n)] + ["V", "ellipse_class"]
    header += [f"alpha_star_{i + 1}" for i in range(prob.n)] + ["status"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    rows = []
    for a, (value, astar, status) in zip(mesh, results):
        cls = ellipse_membership(a).kind if two_d else ""
        rows.append((a, value, cls))
        writer.writerow([_fmt(v) for v in a] + [_fmt(value), cls] + [_fmt(v) for v in astar] + [status])
    write_atomic(out / "sweep.csv", buf.getvalue())

    summary = {"points": len(rows), "grid_steps": prob.grid.n_steps}
    if two_d:
        inside = [v for _, v, c in rows if c != "Outside"]
        outside_idx = [i for i, (_, _, c) in enumerate(rows) if c == "Outside"]
        summary["max_V_inside"] = max(inside) if inside else None
        summary["min_V_outside"] = min(rows[i][1] for i in outside_idx) if outside_idx else None
        if args.crosscheck > 0 and outside_idx:
            summary["crosscheck"] = _crosscheck(prob, w, rows, outside_idx, args, opts, out)
    write_json(out / "sweep.json", summary)
    print(f"swept {len(rows)} points -> {out / 'sweep.csv'}")
    return EXIT_OK


def _crosscheck(prob, w, rows, outside_idx, args, opts, out: Path) -> dict:
    """Re-solve a seeded sample of Outside points on a fine grid."""
    rng = np.random.default_rng(args.seed)
    pick = sorted(rng.choice(outside_idx, size=min(args.crosscheck, len(outside_idx)), replace=False))
    try:
        fine = prob.with_grid(args.crosscheck_grid)
    except ValueError as exc:
        return {"skipped": str(exc)}
    if np.any(w.theta.values != 0):
        return {"skipped": "cross-check needs theta = 0"}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha1", "alpha2", "V", "V_fine", "rel_diff"])
    worst = 0.0
    for i in pick:
        a, value, _ = rows[i]
        v_fine = solve(fine, Parameter.zero_theta(a, fine.grid, fine.k), opts).value
        rel = abs(value - v_fine) / max(abs(v_fine), 1e-300)
        worst = max(worst, rel)
        writer.writerow([_fmt(a[0]), _fmt(a[1]), _fmt(value), _fmt(v_fine), _fmt(rel)])
    write_atomic(out / "crosscheck.csv", buf.getvalue())
    return {"points": len(pick), "grid_steps": args.crosscheck_grid, "max_rel_diff": worst,
            "min_V": min(rows[i][1] for i in pick)}


def demo_path(name: str) -> Path:
    return Path(str(resources.files("ocstab") / "demos" / f"{name}.json"))


def cmd_demo(args) -> int:
    if args.name == "list":
        for name in DEMOS:
            print(name)
        return EXIT_OK
    if args.name not in DEMOS:
        print(f"unknown demo {args.name!r}; choose from {', '.join(DEMOS)}", file=sys.stderr)
        return EXIT_INPUT
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{args.name}.json"
    target.write_text(demo_path(args.name).read_text())
    print(target)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "subdiff": cmd_subdiff,
    "singular-subdiff": cmd_singular,
    "check": cmd_check,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ocstab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem_file", type=Path)
    common.add_argument("--grid", type=int, default=None, help="override grid_steps")
    common.add_argument("--tol", type=float, default=1e-8, help="solver optimality tolerance")
    common.add_argument("--member-tol", type=float, default=1e-6, help="normal-cone membership tolerance")
    common.add_argument("--max-iters", type=int, default=5000)
    common.add_argument("--out", default="ocstab_out", help="output directory (env OCSTAB_OUT wins)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("solve", parents=[common], help="solve the control problem")
    sub.add_parser("subdiff", parents=[common], help="subdifferential and singular subdifferential of V")
    sub.add_parser("singular-subdiff", parents=[common], help="singular subdifferential of V only")
    sub.add_parser("check", parents=[common], help="assumption, adjoint and convergence checks")
    sw = sub.add_parser("sweep", parents=[common], help="map V and alpha* over a grid of initial states")
    sw.add_argument("--alpha-grid", default="-0.6:0.6:21", help="lo:hi:count[,lo:hi:count...]")
    sw.add_argument("--crosscheck", type=int, default=5, help="number of Outside points re-solved on a fine grid")
    sw.add_argument("--crosscheck-grid", type=int, default=2000)

    demo = sub.add_parser("demo", help="export a bundled demo problem file ('list' to enumerate)")
    demo.add_argument("name")
    demo.add_argument("--out", default="ocstab_out")
    return parser


def _manifest(args, out: Path, started: float, exit_code: int):
    opts = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    write_json(out / "manifest.json", {
        "command": args.command,
        "input": str(getattr(args, "problem_file", "")),
        "options": opts,
        "output_dir": str(out),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_at": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "wall_time_s": time.time() - started,
        "exit_code": exit_code,
    })


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would collide with the non-convergence code
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "demo":
        return cmd_demo(args)

    started = time.time()
    out = _out_dir(args)
    code = EXIT_INPUT
    try:
        if args.jobs < 1 or args.max_iters < 1 or not args.tol > 0:
            raise ProblemFileError("options", "--jobs and --max-iters must be >= 1 and --tol > 0")
        if args.grid is not None and args.grid < 2:
            raise ProblemFileError("--grid", "expected an integer >= 2")
        prob, w, _ = load_problem(args.problem_file, args.grid)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args, prob, w, out)
    except ProblemFileError as exc:
        print(f"error: {args.problem_file}: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except StepSingular as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    finally:
        if out.is_dir():
            _manifest(args, out, started, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
