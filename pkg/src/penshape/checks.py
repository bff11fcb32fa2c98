"""Diagnostics: adjoint gradient versus finite differences, and penalty decay in eps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import interpolate_nodal
from .optimizer import adjoint_directional_derivative
from .pde import penalty_mass_integral
from .problems import RunConfig, build, preset


@dataclass(frozen=True)
class GradientCheck:
    adjoint: np.ndarray
    finite_difference: np.ndarray

    @property
    def relative_errors(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.finite_difference), 1e-300)
        return np.abs(self.adjoint - self.finite_difference) / scale

    @property
    def max_error(self) -> float:
        return float(self.relative_errors.max())


def smooth_directions(mesh, count, seed=0) -> list:
    """Random low-frequency trigonometric fields, normalized to unit max norm."""
    rng = np.random.default_rng(seed)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    out = []
    for _ in range(count):
        q = np.zeros(mesh.n_vertices)
        for kx in range(3):
            for ky in range(3):
                a, phx, phy = rng.uniform(-1, 1), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
                q += a * np.cos(np.pi * kx * x / 2 + phx) * np.cos(np.pi * ky * y / 2 + phy)
        out.append(q / np.abs(q).max())
    return out


def gradient_check(config: RunConfig | None = None, directions=5, fd_step=1e-4, seed=0,
                   threads=1) -> GradientCheck:
    """Compare adjoint directional derivatives with centered differences of the cost.

    The default configuration is Example 1 on a 17 x 17 grid, rho = 0, one
    sample, eps = 0.1 and the full direction mode.  A wide penalty layer
    keeps the cost smooth on the scale of the difference step.
    """
    if config is None:
        config = preset(1).replace(grid_n=17, rho=0.0, n_samples=1, eps=0.1,
                                   direction="full", cg_tol=1e-13)
    if directions < 1:
        raise ValueError("need at least one direction")
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    setup = build(config, threads=threads)
    problem, g = setup.problem, setup.g0
    sols = problem.solve(g)
    adj, fd = [], []
    for q in smooth_directions(setup.mesh, directions, seed):
        adj.append(adjoint_directional_derivative(problem, sols, g, q))
        plus = problem.expected_cost(problem.solve(g + fd_step * q, adjoint=False))
        minus = problem.expected_cost(problem.solve(g - fd_step * q, adjoint=False))
        fd.append((plus - minus) / (2 * fd_step))
    return GradientCheck(np.array(adj), np.array(fd))


def eps_sweep(eps_values, config: RunConfig | None = None) -> np.ndarray:
    """int (1 - H_eps(g0)) u^2 for each eps, at the configuration's initial shape."""
    eps_values = [float(e) for e in eps_values]
    if not eps_values or any(not e > 0 for e in eps_values):
        raise ValueError("eps values must be positive")
    if config is None:
        config = preset(1).replace(grid_n=65, rho=0.0, n_samples=1)
    out = []
    for eps in eps_values:
        setup = build(config.replace(eps=eps))
        sols = setup.problem.solve(setup.g0, adjoint=False)
        vals = [penalty_mass_integral(setup.mesh, s.u, setup.g0, eps) for s in sols]
        out.append(np.mean(vals))
    return np.array(out)


def manufactured_errors(grids=(17, 33, 65)) -> tuple:
    """L2 errors of the P1 solution of -lap u = 2 pi^2 sin sin on D (no shape penalty).

    Returns (mesh sizes, errors, observed orders between consecutive grids).
    """
    from .assembly import assemble_mass, assemble_stiffness, load_vector
    from .mesh import build_structured_mesh
    from .pde import l2_error
    from .penalty import CoefficientSample
    from .problems import resolve_function
    from .solver import cg_solve

    exact = resolve_function("sine")
    force = resolve_function("sine_force")
    hs, errs = [], []
    for n in grids:
        mesh = build_structured_mesh(n)
        sample = CoefficientSample(np.zeros(mesh.n_triangles), 0.0, 0)
        # g > 0 everywhere: H_eps = 1 and the penalty term vanishes
        A = assemble_stiffness(mesh, sample, np.ones(mesh.n_vertices), 1e-5)
        b = load_vector(mesh, assemble_mass(mesh), interpolate_nodal(mesh, force))
        u, _ = cg_solve(A, b, tol=1e-12)
        hs.append(mesh.h)
        errs.append(l2_error(mesh, u, exact))
    hs, errs = np.array(hs), np.array(errs)
    orders = np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])
    return hs, errs, orders
