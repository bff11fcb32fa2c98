"""P1 finite element matrices on a fixed mesh.

Every matrix shares one CSR sparsity pattern per mesh.  Element
contributions are scattered into the CSR data array with ``np.bincount``,
which accumulates in a fixed order and keeps assembly bitwise reproducible.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from .mesh import MIDPOINT_BASIS, Mesh, SubdomainSpec
from .penalty import CoefficientSample, h_eps

_patterns: "weakref.WeakKeyDictionary[Mesh, _Pattern]" = weakref.WeakKeyDictionary()

# sum_q phi_i(m_q) phi_j(m_q) for the edge-midpoint rule, flattened per (q, i, j)
_PHI_PHI = np.einsum("qi,qj->qij", MIDPOINT_BASIS, MIDPOINT_BASIS).reshape(3, 9)


class _Pattern:
    """CSR structure of the P1 connectivity and the element -> CSR scatter map."""

    def __init__(self, mesh: Mesh):
        n = mesh.n_vertices
        tri = mesh.triangles
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        keys, self.scatter = np.unique(rows * n + cols, return_inverse=True)
        self.scatter = self.scatter.ravel()
        self.nnz = keys.size
        self.indices = (keys % n).astype(np.int32)
        row_of = keys // n
        self.indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(row_of, minlength=n), out=self.indptr[1:])
        self.n = n

        bnd = mesh.boundary_vertex
        self.dirichlet_entries = bnd[row_of] | bnd[self.indices]
        self.dirichlet_diag = self.dirichlet_entries & (row_of == self.indices) & bnd[row_of]

        # stiffness entries per element before the coefficient multiplies in
        grads = mesh.basis_gradients
        local = np.einsum("tid,tjd->tij", grads, grads) * mesh.areas[:, None, None]
        self.local_stiffness = local.reshape(-1, 9)
        self.local_mass = (mesh.areas[:, None] / 3.0) * _PHI_PHI.sum(axis=0)[None, :]

    def accumulate(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.scatter, weights=local.ravel(), minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def pattern(mesh: Mesh) -> _Pattern:
    pat = _patterns.get(mesh)
    if pat is None:
        pat = _patterns[mesh] = _Pattern(mesh)
    return pat


def _check_nodal(mesh: Mesh, v, name="g") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({mesh.n_vertices},)")
    return v


def _weighted_mass_data(mesh: Mesh, weights_q: np.ndarray) -> np.ndarray:
    """CSR data of the mass matrix with a weight given at each midpoint node."""
    pat = pattern(mesh)
    local = (weights_q * (mesh.areas[:, None] / 3.0)) @ _PHI_PHI
    return pat.accumulate(local)


def penalty_weight(mesh: Mesh, g, eps) -> np.ndarray:
    """H_eps(g_h) at the edge midpoints of every triangle, (n_t, 3)."""
    return h_eps(mesh.at_midpoints(g), eps)


def dirichlet_rows(mesh: Mesh, data: np.ndarray) -> np.ndarray:
    """Symmetric elimination of the boundary rows and columns of CSR data."""
    pat = pattern(mesh)
    data = data.copy()
    data[pat.dirichlet_entries] = 0.0
    data[pat.dirichlet_diag] = 1.0
    return data


def stiffness_data(mesh: Mesh, sample: CoefficientSample, penalty_data: np.ndarray) -> np.ndarray:
    """Penalized stiffness data for one sample, Dirichlet rows already eliminated."""
    pat = pattern(mesh)
    data = pat.accumulate(pat.local_stiffness * sample.alpha[:, None])
    data += penalty_data
    data[pat.dirichlet_entries] = 0.0
    data[pat.dirichlet_diag] = 1.0
    return data


def penalty_data(mesh: Mesh, g, eps) -> np.ndarray:
    """(1/eps) * mass weighted by 1 - H_eps(g_h), as CSR data."""
    return _weighted_mass_data(mesh, 1.0 - penalty_weight(mesh, g, eps)) / eps


def assemble_stiffness(mesh: Mesh, sample: CoefficientSample, g, eps) -> sp.csr_matrix:
    """Penalized operator of one coefficient sample for shape field g.

    alpha-weighted P1 stiffness plus (1/eps) times the (1 - H_eps(g))
    weighted mass; boundary rows/columns replaced by identity.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    g = _check_nodal(mesh, g)
    if sample.eta.shape != (mesh.n_triangles,):
        raise ValueError("coefficient sample does not match the mesh")
    return pattern(mesh).matrix(stiffness_data(mesh, sample, penalty_data(mesh, g, eps)))


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    pat = pattern(mesh)
    return pat.matrix(pat.accumulate(pat.local_mass))


def assemble_weighted_mass(mesh: Mesh, g, eps, weight: str = "h_eps") -> sp.csr_matrix:
    """Mass matrix weighted by H_eps(g) or 1 - H_eps(g) at midpoint nodes."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    g = _check_nodal(mesh, g)
    w = penalty_weight(mesh, g, eps)
    if weight == "one_minus_h_eps":
        w = 1.0 - w
    elif weight != "h_eps":
        raise ValueError(f"unknown weight {weight!r}")
    return pattern(mesh).matrix(_weighted_mass_data(mesh, w))


def subdomain_elements(mesh: Mesh, spec: SubdomainSpec) -> np.ndarray:
    """Triangles assigned to O: those whose centroid lies in the closed set."""
    return spec.contains(mesh.centroids)


def assemble_subdomain_mass(mesh: Mesh, spec: SubdomainSpec) -> sp.csr_matrix:
    if spec.kind == "none":
        raise ValueError("subdomain mass needs a subdomain")
    pat = pattern(mesh)
    keep = subdomain_elements(mesh, spec).astype(float)
    return pat.matrix(pat.accumulate(pat.local_mass * keep[:, None]))


def interpolate_nodal(mesh: Mesh, func) -> np.ndarray:
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return np.broadcast_to(np.asarray(func(x, y), dtype=float), (mesh.n_vertices,)).copy()


def load_vector(mesh: Mesh, mass: sp.csr_matrix, f) -> np.ndarray:
    """mass @ f with boundary entries zeroed (homogeneous Dirichlet)."""
    b = mass @ _check_nodal(mesh, f, "f")
    b[mesh.boundary_vertex] = 0.0
    return b
