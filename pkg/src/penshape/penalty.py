"""Smoothed cutoff H_eps and the random diffusion coefficient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")


def h_eps(g, eps):
    """1 on {g >= 0}, 0 on {g <= -eps}, cubic blend in between.

    Works elementwise on arrays; returns a float for scalar input.
    """
    _check_eps(eps)
    g = np.asarray(g, dtype=float)
    s = g + eps
    # clipped: rounding can push the cubic a few ulps past 1 next to g = 0
    blend = np.clip((eps - 2.0 * g) * s * s / eps ** 3, 0.0, 1.0)
    out = np.where(g >= 0.0, 1.0, np.where(g <= -eps, 0.0, blend))
    return out if out.ndim else float(out)


def h_eps_prime(g, eps):
    """Derivative of h_eps; zero at the two kinks g = 0 and g = -eps."""
    _check_eps(eps)
    g = np.asarray(g, dtype=float)
    inside = (g > -eps) & (g < 0.0)
    out = np.where(inside, -6.0 * g * (g + eps) / eps ** 3, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class CoefficientSample:
    eta: np.ndarray   # per triangle, in [-1, 1]
    rho: float
    sample_id: int

    @property
    def alpha(self) -> np.ndarray:
        """Piecewise-constant diffusion coefficient 1 + rho * eta."""
        return 1.0 + self.rho * self.eta


def sample_coefficient(mesh: Mesh, rho: float, seed: int, sample_id: int) -> CoefficientSample:
    """One iid uniform[-1, 1] value per triangle.

    The draw for triangle t is the t-th output of a Philox stream keyed by
    (seed, sample_id), so it does not depend on which other samples exist or
    on the order they are generated in.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho!r}")
    if seed < 0 or sample_id < 0:
        raise ValueError("seed and sample_id must be non-negative")
    rng = np.random.Generator(np.random.Philox(key=[int(seed), int(sample_id)]))
    eta = rng.uniform(-1.0, 1.0, mesh.n_triangles)
    eta.setflags(write=False)
    return CoefficientSample(eta=eta, rho=float(rho), sample_id=int(sample_id))


def sample_set(mesh: Mesh, rho: float, seed: int, n_samples: int, start: int = 0):
    return [sample_coefficient(mesh, rho, seed, start + i) for i in range(n_samples)]
