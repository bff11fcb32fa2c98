"""Projected, momentum-smoothed gradient descent on the nodal shape field."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .pde import PenalizedProblem, mc_expect
from .penalty import h_eps_prime
from .solver import SolverError

DIRECTION_MODES = ("full", "simplified", "reduced")
# "lumped": nodal density times lumped vertex area, the Euclidean gradient of the
# discrete cost with respect to the vertex values; "nodal": the density itself.
GRADIENT_SCALINGS = ("lumped", "nodal")


@dataclass(frozen=True)
class OptimizerParams:
    alpha_min: float = 1.0
    alpha_max: float = 10.0
    armijo_c: float = 1e-4
    momentum_beta: float = 0.9
    max_iters: int = 1000
    tol_cost: float = 1e-8
    tol_g: float = 1e-8
    gradient_scaling: str = "lumped"

    def __post_init__(self):
        if self.gradient_scaling not in GRADIENT_SCALINGS:
            raise ValueError(f"unknown gradient scaling {self.gradient_scaling!r}")
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")
        if not 0 <= self.momentum_beta < 1:
            raise ValueError("momentum_beta must lie in [0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    step: float
    dcost: float
    dg: float
    seconds: float


@dataclass
class RunHistory:
    records: list = field(default_factory=list)
    termination: str = ""
    g_final: np.ndarray | None = None

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.records[1:]])


def gradient_density(mode, samples, g, u_d, eps) -> np.ndarray:
    """Monte Carlo average of the pointwise gradient density at the vertices."""
    if mode not in DIRECTION_MODES:
        raise ValueError(f"unknown direction mode {mode!r}")
    if not samples:
        raise ValueError("need at least one sample solution")
    if mode == "reduced":
        vals = [0.5 * (s.u - u_d) ** 2 + s.u * s.z / eps for s in samples]
    else:
        vals = [s.u * s.z for s in samples]
    dens = mc_expect(vals, keys=[s.sample_id for s in samples])
    if mode == "full":
        dens = h_eps_prime(g, eps) * dens / eps
    elif mode == "simplified":
        dens = dens / eps
    return dens


def descent_direction(mode, samples, g, u_d, eps) -> np.ndarray:
    return -gradient_density(mode, samples, g, u_d, eps)


def momentum_update(d_prev, d_new, beta):
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    if d_prev is None:
        return d_new
    return beta * d_prev + (1.0 - beta) * d_new


def project_feasible(g, constraint_mask) -> np.ndarray:
    """Clamp g to be non-negative on the masked vertices."""
    g = np.array(g, dtype=float)
    if constraint_mask is not None:
        g[constraint_mask] = np.maximum(g[constraint_mask], 0.0)
    return g


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    cost: float
    stalled: bool = False
    armijo: bool = True


def line_search(cost_at, alpha_prev, params: OptimizerParams, cost0, slope):
    """Three-point quadratic fit around alpha_prev, clamped, then Armijo backtracking.

    ``cost_at`` maps a step size to the expected cost after the step;
    ``slope`` is the directional derivative at step 0.  A step is accepted
    only if it also strictly lowers the cost.
    """
    seen = {}

    def c(a):
        if a not in seen:
            seen[a] = cost_at(a)
        return seen[a]

    a0, a1, a2 = 0.5 * alpha_prev, alpha_prev, 1.5 * alpha_prev
    v0, v1, v2 = c(a0), c(a1), c(a2)
    if not all(map(math.isfinite, (v0, v1, v2))):
        return LineSearchResult(alpha_prev, cost0, stalled=True)

    d01 = (v1 - v0) / (a1 - a0)
    d12 = (v2 - v1) / (a2 - a1)
    curvature = (d12 - d01) / (a2 - a0)
    if curvature > 0:
        alpha = 0.5 * (a0 + a1) - d01 / (2.0 * curvature)
    else:
        alpha = min(zip((v0, v1, v2), (a0, a1, a2)))[1]
    alpha = min(max(alpha, params.alpha_min), params.alpha_max)

    while True:
        v = c(alpha)
        if math.isfinite(v) and v < cost0 and v <= cost0 + params.armijo_c * alpha * slope:
            return LineSearchResult(alpha, v)
        if alpha <= params.alpha_min:
            break
        alpha = max(0.5 * alpha, params.alpha_min)

    v = c(params.alpha_min)
    if math.isfinite(v) and v < cost0:
        return LineSearchResult(params.alpha_min, v, armijo=False)
    return LineSearchResult(alpha_prev, cost0, stalled=True)


def _change(new, old, scale):
    """Absolute change, or relative to |scale| when |scale| >= 1."""
    diff = float(np.linalg.norm(np.atleast_1d(new - old)))
    s = float(np.linalg.norm(np.atleast_1d(scale)))
    return diff / s if s >= 1.0 else diff


def optimize(problem: PenalizedProblem, g0, mode, params: OptimizerParams = OptimizerParams(),
             constraint_mask=None, callback=None, resample=None) -> RunHistory:
    """Run the descent loop from g0.

    ``callback(record, g)`` is called after every recorded iteration.
    ``resample(k)``, if given, returns a fresh sample list for iteration k.
    """
    mesh: Mesh = problem.mesh
    u_d = problem.objective.u_d
    eps = problem.eps
    lumped = mesh.lumped_areas
    start = time.perf_counter()
    hist = RunHistory()

    def record(rec, g):
        hist.records.append(rec)
        if callback is not None:
            callback(rec, g)

    g = project_feasible(g0, constraint_mask)
    try:
        sols = problem.solve(g)
    except SolverError:
        hist.termination = "solver_failure"
        hist.g_final = g
        return hist
    cost = problem.expected_cost(sols)
    record(IterationRecord(0, cost, 0.0, 0.0, 0.0, time.perf_counter() - start), g)

    alpha_prev = params.alpha_min
    d_prev = None
    k = 0
    stalls = 0
    reason = "max_iters"
    while k < params.max_iters:
        if resample is not None and k > 0:
            problem.samples = sorted(resample(k), key=lambda s: s.sample_id)
            try:
                sols = problem.solve(g)
            except SolverError:
                reason = "solver_failure"
                break
            cost = problem.expected_cost(sols)

        grad = gradient_density(mode, sols, g, u_d, eps)
        if params.gradient_scaling == "lumped":
            grad = grad * lumped
            slope_weight = 1.0
        else:
            slope_weight = lumped
        d = momentum_update(d_prev, -grad, params.momentum_beta)
        slope = float(np.sum(slope_weight * grad * d))
        warm = {s.sample_id: s for s in sols}
        trial = {}

        def cost_at(alpha):
            g_try = project_feasible(g + alpha * d, constraint_mask)
            try:
                trial_sols = problem.solve(g_try, adjoint=False, warm=warm)
            except SolverError:
                return math.nan
            trial[alpha] = (g_try, trial_sols)
            return problem.expected_cost(trial_sols)

        ls = line_search(cost_at, alpha_prev, params, cost, slope)
        if ls.stalled:
            stalls += 1
            if stalls >= 2 or d_prev is None:
                reason = "stalled"
                break
            d_prev = None
            continue
        stalls = 0

        g_new, primal = trial[ls.alpha]
        try:
            sols = problem.solve(g_new, warm={s.sample_id: s for s in primal})
        except SolverError:
            reason = "solver_failure"
            break
        new_cost = problem.expected_cost(sols)
        dcost = _change(new_cost, cost, new_cost)
        dg = _change(g_new, g, g_new)
        k += 1
        g, cost, alpha_prev, d_prev = g_new, new_cost, ls.alpha, d
        record(IterationRecord(k, cost, ls.alpha, dcost, dg, time.perf_counter() - start), g)
        if dcost < params.tol_cost:
            reason = "cost_converged"
            break
        if dg < params.tol_g:
            reason = "g_converged"
            break

    hist.termination = reason
    hist.g_final = g
    return hist


def adjoint_directional_derivative(problem: PenalizedProblem, sols, g, q) -> float:
    """Exact derivative of the discrete expected cost along q, via the adjoint.

    Uses the same midpoint quadrature as assembly, so it matches finite
    differences of the discrete cost up to truncation error.
    """
    mesh = problem.mesh
    eps = problem.eps
    w = mesh.areas[:, None] / 3.0
    hp_q = h_eps_prime(mesh.at_midpoints(g), eps) * mesh.at_midpoints(q) * w
    vals = []
    for s in sols:
        val = np.sum(hp_q * mesh.at_midpoints(s.u) * mesh.at_midpoints(s.z)) / eps
        if problem.objective.kind == "on_K":
            val += 0.5 * np.sum(hp_q * mesh.at_midpoints(s.u - problem.objective.u_d) ** 2)
        vals.append(float(val))
    return mc_expect(vals, keys=[s.sample_id for s in sols])


def run_optimization(config, threads=1, callback=None) -> RunHistory:
    """Build the problem described by a RunConfig and optimize it."""
    from .penalty import sample_set
    from .problems import build

    setup = build(config, threads=threads)
    resample = None
    if config.resample:
        def resample(k):
            return sample_set(setup.mesh, config.rho, config.seed, config.n_samples,
                              start=k * config.n_samples)
    return optimize(setup.problem, setup.g0, config.direction, config.optimizer_params(),
                    setup.constraint_mask, callback=callback, resample=resample)
