"""Penalized primal/adjoint solves per random sample and Monte Carlo averages."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import assembly
from .mesh import Mesh, SubdomainSpec
from .penalty import CoefficientSample, h_eps
from .solver import DEFAULT_TOL, SolveReport, SolverError, cg_solve


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Tracking cost 1/2 int (u - u_d)^2 over O ("on_O") or over K_g ("on_K")."""
    kind: str
    u_d: np.ndarray
    subdomain: SubdomainSpec = field(default_factory=SubdomainSpec)

    def __post_init__(self):
        if self.kind == "on_O" and self.subdomain.kind == "none":
            raise ValueError("objective on O needs a subdomain")
        if self.kind == "on_K" and self.subdomain.kind != "none":
            raise ValueError("objective on K takes no subdomain")
        if self.kind not in ("on_O", "on_K"):
            raise ValueError(f"unknown objective kind {self.kind!r}")


@dataclass(eq=False)
class SampleSolution:
    sample_id: int
    u: np.ndarray
    cost: float
    z: np.ndarray | None = None
    solve_reports: list = field(default_factory=list)


def _solve(A, b, x0=None, tol=DEFAULT_TOL, preconditioner=None):
    x, report = cg_solve(A, b, tol=tol, x0=x0, preconditioner=preconditioner)
    if not report.converged:
        raise SolverError(report)
    return x, report


def solve_primal(mesh: Mesh, sample: CoefficientSample, g, eps, f, tol=DEFAULT_TOL):
    """Primal state: stiffness(sample, g) u = mass @ f."""
    A = assembly.assemble_stiffness(mesh, sample, g, eps)
    b = assembly.load_vector(mesh, assembly.assemble_mass(mesh), f)
    return _solve(A, b, tol=tol)[0]


def cost_weight(mesh: Mesh, g, eps, obj: ObjectiveSpec):
    """Matrix W with cost = 1/2 (u - u_d)^T W (u - u_d)."""
    if obj.kind == "on_O":
        return assembly.assemble_subdomain_mass(mesh, obj.subdomain)
    return assembly.assemble_weighted_mass(mesh, g, eps, "h_eps")


def adjoint_rhs(mesh: Mesh, W, u, u_d):
    r = W @ (u - u_d)
    r[mesh.boundary_vertex] = 0.0
    return r


def solve_adjoint(mesh: Mesh, sample: CoefficientSample, g, eps, u, obj: ObjectiveSpec,
                  tol=DEFAULT_TOL):
    """Adjoint state: the primal operator applied to z equals W (u - u_d)."""
    A = assembly.assemble_stiffness(mesh, sample, g, eps)
    r = adjoint_rhs(mesh, cost_weight(mesh, g, eps, obj), u, obj.u_d)
    return _solve(A, r, tol=tol)[0]


def eval_cost(mesh: Mesh, u, g, eps, obj: ObjectiveSpec) -> float:
    e = np.asarray(u) - obj.u_d
    if obj.kind == "on_O":
        W = assembly.assemble_subdomain_mass(mesh, obj.subdomain)
        return 0.5 * float(e @ (W @ e))
    # full midpoint quadrature of H_eps(g_h) (u_h - u_dh)^2
    wq = assembly.penalty_weight(mesh, g, eps) * (mesh.areas[:, None] / 3.0)
    return 0.5 * float(np.sum(wq * mesh.at_midpoints(e) ** 2))


def penalty_mass_integral(mesh: Mesh, u, g, eps) -> float:
    """int_D (1 - H_eps(g)) u^2, edge-midpoint quadrature."""
    wq = (1.0 - assembly.penalty_weight(mesh, g, eps)) * (mesh.areas[:, None] / 3.0)
    return float(np.sum(wq * mesh.at_midpoints(np.asarray(u, dtype=float)) ** 2))


def mc_expect(values, keys=None):
    """Sample mean in a fixed order.

    Accumulates deviations from the first value, so M identical samples
    average to exactly that value.  With ``keys`` the values are first
    ordered by key, which makes the result independent of input order.
    """
    values = list(values)
    if not values:
        raise ValueError("mc_expect needs at least one value")
    if keys is not None:
        values = [v for _, v in sorted(zip(keys, values), key=lambda kv: kv[0])]
    ref = values[0]
    if np.ndim(ref) == 0:
        total = 0.0
        for v in values[1:]:
            total += v - ref
        return ref + total / len(values)
    ref = np.asarray(ref, dtype=float)
    total = np.zeros_like(ref)
    for v in values[1:]:
        total += v - ref
    return ref + total / len(values)


# Strang-Fix 6-point rule, exact to degree 4 (barycentric points, weights sum to 1).
_P1, _Q1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_P2, _Q2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
_L2_POINTS = np.array([[_P1, _P1, _Q1], [_P1, _Q1, _P1], [_Q1, _P1, _P1],
                       [_P2, _P2, _Q2], [_P2, _Q2, _P2], [_Q2, _P2, _P2]])
_L2_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)


def l2_error(mesh: Mesh, u_h, exact) -> float:
    """|| u_h - exact ||_{L2(D)} with a degree-4 rule, for convergence studies."""
    pts = np.einsum("qi,tid->tqd", _L2_POINTS, mesh.vertices[mesh.triangles])
    uh = np.asarray(u_h)[mesh.triangles] @ _L2_POINTS.T
    diff = uh - exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(mesh.areas[:, None] * _L2_WEIGHTS * diff ** 2)))


def l2_norm(mesh: Mesh, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ (assembly.assemble_mass(mesh) @ v)))


class PenalizedProblem:
    """Everything fixed during a run: mesh, load, objective, samples, solver knobs.

    ``solve(g)`` runs the per-sample pipeline (assemble, primal, cost,
    optionally adjoint) over all samples.  Samples are independent; with
    ``threads > 1`` they run on a thread pool, results come back in sample
    order, and every reduction happens afterwards in that order.
    """

    def __init__(self, mesh: Mesh, f, objective: ObjectiveSpec, eps, samples,
                 tol=DEFAULT_TOL, threads=1, preconditioner="jacobi"):
        if not eps > 0:
            raise ValueError(f"eps must be positive, got {eps!r}")
        if not samples:
            raise ValueError("need at least one coefficient sample")
        if preconditioner not in ("jacobi", "mean"):
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
        self.mesh = mesh
        self.f = np.asarray(f, dtype=float)
        self.objective = objective
        self.eps = float(eps)
        self.samples = sorted(samples, key=lambda s: s.sample_id)
        self.tol = tol
        self.threads = max(1, int(threads))
        self.preconditioner = preconditioner
        self.mass = assembly.assemble_mass(mesh)
        self.load = assembly.load_vector(mesh, self.mass, self.f)
        if objective.kind == "on_O":
            self._fixed_weight = assembly.assemble_subdomain_mass(mesh, objective.subdomain)

    def cost_weight(self, g):
        if self.objective.kind == "on_O":
            return self._fixed_weight
        return assembly.assemble_weighted_mass(self.mesh, g, self.eps, "h_eps")

    def _mean_preconditioner(self, pen):
        if self.preconditioner != "mean":
            return None
        pat = assembly.pattern(self.mesh)
        mean = CoefficientSample(np.zeros(self.mesh.n_triangles), 0.0, -1)
        A0 = pat.matrix(assembly.stiffness_data(self.mesh, mean, pen))
        return spla.splu(A0.tocsc()).solve

    def solve(self, g, adjoint=True, warm=None):
        """Per-sample solutions at shape field g, ordered by sample_id.

        ``warm`` maps sample_id -> SampleSolution used as CG starting guesses.
        Raises SolverError if any solve fails.
        """
        g = np.asarray(g, dtype=float)
        mesh = self.mesh
        pat = assembly.pattern(mesh)
        pen = assembly.penalty_data(mesh, g, self.eps)
        W = self.cost_weight(g)
        prec = self._mean_preconditioner(pen)
        u_d = self.objective.u_d

        def one(sample):
            prev = warm.get(sample.sample_id) if warm else None
            A = pat.matrix(assembly.stiffness_data(mesh, sample, pen))
            u, rep_u = _solve(A, self.load, None if prev is None else prev.u,
                              self.tol, prec)
            e = u - u_d
            cost = 0.5 * float(e @ (W @ e))
            sol = SampleSolution(sample.sample_id, u, cost, solve_reports=[rep_u])
            if adjoint:
                x0 = None if prev is None else prev.z
                sol.z, rep_z = _solve(A, adjoint_rhs(mesh, W, u, u_d), x0, self.tol, prec)
                sol.solve_reports.append(rep_z)
            return sol

        if self.threads == 1:
            return [one(s) for s in self.samples]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(one, self.samples))

    def expected_cost(self, sols) -> float:
        return mc_expect([s.cost for s in sols], keys=[s.sample_id for s in sols])
