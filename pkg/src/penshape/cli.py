"""Command-line front end.

Subcommands: run, gradient-check, eps-sweep, mesh-info.  Exit codes are
0 on success, 1 on a runtime failure (stalled line search, CG failure,
failed check) and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io
from .optimizer import DIRECTION_MODES, GRADIENT_SCALINGS, run_optimization
from .problems import load_config, preset, save_config

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
FAILED_TERMINATIONS = ("stalled", "solver_failure")


class UsageError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _index_list(text):
    try:
        values = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated iterations, got {text!r}")
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("iterations must be non-negative")
    return values


def _eps_list(text):
    values = [float(v) for v in text.replace(",", " ").split()]
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return values


def _add_problem_flags(p, example_required=True):
    src = p.add_mutually_exclusive_group(required=example_required)
    src.add_argument("--example", type=int, choices=(1, 2, 3, 4), help="built-in example")
    src.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--grid-n", type=int, help="vertices per side of the grid")
    p.add_argument("--samples", type=_positive_int, help="Monte Carlo sample count")
    p.add_argument("--eps", type=_positive_float, help="penalty parameter")
    p.add_argument("--rho", type=float, help="coefficient perturbation amplitude, in [0, 1)")
    p.add_argument("--seed", type=int, help="random seed (non-negative)")
    p.add_argument("--direction", choices=DIRECTION_MODES)
    p.add_argument("--gradient-scaling", choices=GRADIENT_SCALINGS)
    p.add_argument("--preconditioner", choices=("jacobi", "mean"),
                   help="CG preconditioner: diagonal, or a factorization of the rho = 0 operator")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads for the sample loop (default: all cores)")


_OVERRIDES = {"grid_n": "grid_n", "samples": "n_samples", "eps": "eps", "rho": "rho",
              "seed": "seed", "direction": "direction", "max_iters": "max_iters",
              "preconditioner": "preconditioner", "gradient_scaling": "gradient_scaling"}


def resolve_config(args):
    """Preset or config file first, then any explicitly given flags on top."""
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}")
    else:
        cfg = preset(args.example or 1)
    changes = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()
               if getattr(args, flag, None) is not None}
    if getattr(args, "out", None) is not None:
        changes["out_dir"] = args.out
    return cfg.replace(**changes)


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    save_config(cfg, os.path.join(out, "config.txt"))
    wanted = set(args.snapshot_at or ())
    every = args.snapshot_every

    from .mesh import build_structured_mesh
    mesh = build_structured_mesh(cfg.grid_n)
    writer = io.HistoryWriter(os.path.join(out, "history.csv"))

    def callback(rec, g):
        writer.add(rec)
        k = rec.iteration
        if k in wanted or (every and k % every == 0):
            io.write_field_snapshot(mesh, g, k, out)
        if not args.quiet:
            print(f"iter {k:4d}  cost {rec.cost:.6e}  step {rec.step:.3g}  dg {rec.dg:.3e}",
                  flush=True)

    hist = run_optimization(cfg, threads=args.threads, callback=callback)
    writer.close(hist.termination)
    io.write_field_snapshot(mesh, hist.g_final, "final", out)
    print(f"termination={hist.termination} final_cost={hist.records[-1].cost!r}")
    if hist.termination in FAILED_TERMINATIONS:
        print(f"run failed: {hist.termination}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_gradient_check(args) -> int:
    from .checks import gradient_check
    cfg = None
    if args.example or args.config or any(getattr(args, f) is not None for f in _OVERRIDES
                                          if hasattr(args, f)):
        cfg = resolve_config(args)
    res = gradient_check(cfg, directions=args.directions, fd_step=args.fd_step,
                         seed=args.direction_seed, threads=args.threads)
    print("direction  adjoint                 finite-difference       rel-error")
    for i, (a, f, e) in enumerate(zip(res.adjoint, res.finite_difference, res.relative_errors)):
        print(f"{i:9d}  {a: .16e}  {f: .16e}  {e:.3e}")
    print(f"max relative error {res.max_error:.3e} (tolerance {args.tolerance:g})")
    return EXIT_OK if res.max_error < args.tolerance else EXIT_FAILURE


def cmd_eps_sweep(args) -> int:
    from .checks import eps_sweep
    cfg = resolve_config(args).replace(rho=args.rho if args.rho is not None else 0.0,
                                       n_samples=args.samples or 1,
                                       grid_n=args.grid_n or 65)
    values = eps_sweep(args.eps_values, cfg)
    print("eps                      penalty-integral")
    for e, v in zip(args.eps_values, values.tolist()):
        print(f"{e!r:<24} {v!r}")
    ok = bool(np.all(np.diff(values) < 0))
    print("strictly decreasing" if ok else "NOT strictly decreasing")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_mesh_info(args) -> int:
    from .assembly import pattern
    from .mesh import build_structured_mesh, write_mesh
    mesh = build_structured_mesh(args.grid_n)
    print(f"grid_n     {args.grid_n}")
    print(f"vertices   {mesh.n_vertices}")
    print(f"triangles  {mesh.n_triangles}")
    print(f"boundary   {int(mesh.boundary_vertex.sum())}")
    print(f"h          {mesh.h!r}")
    print(f"nnz        {pattern(mesh).nnz}")
    if args.export:
        write_mesh(mesh, args.export)
        print(f"mesh written to {args.export}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="penshape",
        description="Shape optimization for an elliptic PDE with a random coefficient.",
        epilog="Settings come from --example or --config; any flag given explicitly "
               "overrides the corresponding value from that source.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="optimize a preset or configured problem",
                         epilog="Precedence: explicit flags > config file or preset.")
    _add_problem_flags(run)
    run.add_argument("--max-iters", type=int, help="iteration cap (0 evaluates g0 only)")
    run.add_argument("--snapshot-every", type=_positive_int, metavar="K",
                     help="write the shape field every K iterations")
    run.add_argument("--snapshot-at", type=_index_list, metavar="I,J,K",
                     help="write the shape field at these iterations")
    run.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    run.add_argument("--quiet", action="store_true", help="no per-iteration output")
    run.set_defaults(func=cmd_run)

    grad = sub.add_parser("gradient-check", help="adjoint derivative versus finite differences",
                          epilog="Without problem flags: Example 1, grid 17, rho 0, one sample, "
                                 "eps 0.1, full direction.")
    _add_problem_flags(grad, example_required=False)
    grad.add_argument("--fd-step", type=_positive_float, default=1e-4)
    grad.add_argument("--directions", type=_positive_int, default=5)
    grad.add_argument("--direction-seed", type=int, default=0)
    grad.add_argument("--tolerance", type=_positive_float, default=1e-3)
    grad.set_defaults(func=cmd_gradient_check)

    sweep = sub.add_parser("eps-sweep", help="penalty integral decay as eps shrinks",
                           epilog="Defaults: Example 1 initial shape, grid 65, rho 0, one sample.")
    _add_problem_flags(sweep, example_required=False)
    sweep.add_argument("eps_values", type=_eps_list, nargs="?", default=[1e-2, 1e-3, 1e-4, 1e-5],
                       metavar="EPS_LIST", help="comma separated eps values")
    sweep.set_defaults(func=cmd_eps_sweep)

    info = sub.add_parser("mesh-info", help="mesh statistics, optionally export the mesh")
    info.add_argument("--grid-n", type=int, default=128)
    info.add_argument("--export", metavar="PATH")
    info.set_defaults(func=cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"penshape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"penshape: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
