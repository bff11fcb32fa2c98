"""Structured triangulation of the hold-all square D = (-1, 1)^2."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Barycentric values of the three P1 basis functions at the edge midpoints.
# Row q is the midpoint of edge (q, q+1 mod 3).
MIDPOINT_BASIS = np.array([[0.5, 0.5, 0.0],
                           [0.0, 0.5, 0.5],
                           [0.5, 0.0, 0.5]])

_MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray        # (n_vertices, 2)
    triangles: np.ndarray       # (n_triangles, 3), counterclockwise
    boundary_vertex: np.ndarray  # (n_vertices,) bool
    grid_n: int

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def h(self) -> float:
        """Grid spacing (leg length of every triangle)."""
        return 2.0 / (self.grid_n - 1)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three local basis functions, (n_t, 3, 2)."""
        p = self.vertices[self.triangles]
        twice_area = 2.0 * self.signed_areas
        grads = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            grads[:, i, 0] = (a[:, 1] - b[:, 1]) / twice_area
            grads[:, i, 1] = (b[:, 0] - a[:, 0]) / twice_area
        return grads

    @cached_property
    def midpoints(self) -> np.ndarray:
        """Edge-midpoint quadrature nodes of every triangle, (n_t, 3, 2)."""
        return np.einsum("qi,tid->tqd", MIDPOINT_BASIS, self.vertices[self.triangles])

    @cached_property
    def lumped_areas(self) -> np.ndarray:
        """Row sums of the P1 mass matrix (area/3 per incident triangle)."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        return out

    def at_midpoints(self, nodal: np.ndarray) -> np.ndarray:
        """Linear interpolant of a nodal field at the edge midpoints, (n_t, 3)."""
        return nodal[self.triangles] @ MIDPOINT_BASIS.T


def build_structured_mesh(n: int) -> Mesh:
    """Uniform n x n vertex grid on [-1, 1]^2, each cell cut along its
    lower-left to upper-right diagonal."""
    if int(n) != n or n < 2:
        raise ValueError(f"grid_n must be an integer >= 2, got {n!r}")
    n = int(n)
    coords = np.linspace(-1.0, 1.0, n)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="xy")
    v00 = (j * n + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * (n - 1) ** 2, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    boundary = (np.abs(vertices[:, 0]) == 1.0) | (np.abs(vertices[:, 1]) == 1.0)
    return Mesh(vertices=vertices, triangles=triangles, boundary_vertex=boundary, grid_n=n)


@dataclass(frozen=True)
class SubdomainSpec:
    """Observation region O: a closed square, a closed disk, or nothing."""
    kind: str = "none"          # "square" | "disk" | "none"
    size: float = 0.0           # half width or radius
    center: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.kind not in ("square", "disk", "none"):
            raise ValueError(f"unknown subdomain kind {self.kind!r}")
        if self.kind != "none":
            if not self.size > 0:
                raise ValueError("subdomain size must be positive")
            cx, cy = self.center
            if max(abs(cx), abs(cy)) + self.size > 1.0 + _MEMBERSHIP_TOL:
                raise ValueError("subdomain must lie inside D = [-1, 1]^2")

    @classmethod
    def square(cls, half_width, center=(0.0, 0.0)):
        return cls("square", float(half_width), (float(center[0]), float(center[1])))

    @classmethod
    def disk(cls, radius, center=(0.0, 0.0)):
        return cls("disk", float(radius), (float(center[0]), float(center[1])))

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        x = points[..., 0] - self.center[0]
        y = points[..., 1] - self.center[1]
        if self.kind == "square":
            return np.maximum(np.abs(x), np.abs(y)) <= self.size + _MEMBERSHIP_TOL
        if self.kind == "disk":
            return x * x + y * y <= self.size * self.size + _MEMBERSHIP_TOL
        return np.zeros(points.shape[:-1], dtype=bool)

    @property
    def area(self) -> float:
        if self.kind == "square":
            return 4.0 * self.size ** 2
        if self.kind == "disk":
            return np.pi * self.size ** 2
        return 0.0


def vertex_in_subdomain(mesh: Mesh, spec: SubdomainSpec, i: int) -> bool:
    return bool(spec.contains(mesh.vertices[i]))


def subdomain_mask(mesh: Mesh, spec: SubdomainSpec) -> np.ndarray:
    """Per-vertex membership in the closed subdomain."""
    return spec.contains(mesh.vertices)


def element_quadrature(mesh: Mesh, t: int) -> list[tuple[np.ndarray, float]]:
    """Edge-midpoint rule on triangle t; exact up to degree 2."""
    w = mesh.areas[t] / 3.0
    return [(mesh.midpoints[t, q].copy(), w) for q in range(3)]


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r}\n")
        for a, b, c in mesh.triangles.tolist():
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().split()
        nv, nt = int(header[1]), int(header[3])
        verts = np.array([[float(v) for v in fh.readline().split()] for _ in range(nv)])
        tris = np.array([[int(v) for v in fh.readline().split()] for _ in range(nt)], dtype=np.int64)
    return verts.reshape(nv, 2), tris.reshape(nt, 3)
