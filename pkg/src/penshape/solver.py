"""Preconditioned conjugate gradients for the SPD systems of assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float   # ||b - A x|| / ||b||
    converged: bool


class SolverError(RuntimeError):
    def __init__(self, report: SolveReport):
        super().__init__(f"CG did not converge: {report.iterations} iterations, "
                         f"relative residual {report.final_residual:.3e}")
        self.report = report


@numba.njit(cache=True, nogil=True)
def _matvec(indptr, indices, data, x, out):
    for i in range(indptr.size - 1):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        out[i] = s


@numba.njit(cache=True, nogil=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.size):
        s += a[i] * b[i]
    return s


@numba.njit(cache=True, nogil=True)
def _jacobi_pcg(indptr, indices, data, b, x, tol, max_iter):
    n = b.size
    inv_diag = np.empty(n)
    for i in range(n):
        d = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            if indices[k] == i:
                d = data[k]
        inv_diag[i] = 1.0 / d
    target = tol * np.sqrt(_dot(b, b))

    r = np.empty(n)
    q = np.empty(n)
    z = np.empty(n)
    p = np.empty(n)
    it = 0
    while True:
        # (re)start from the true residual so the exit test is honest
        _matvec(indptr, indices, data, x, q)
        for i in range(n):
            r[i] = b[i] - q[i]
        rnorm = np.sqrt(_dot(r, r))
        if rnorm <= target or it >= max_iter:
            return it, rnorm
        for i in range(n):
            z[i] = inv_diag[i] * r[i]
            p[i] = z[i]
        rz = _dot(r, z)
        while it < max_iter:
            _matvec(indptr, indices, data, p, q)
            step = rz / _dot(p, q)
            for i in range(n):
                x[i] += step * p[i]
                r[i] -= step * q[i]
            it += 1
            if np.sqrt(_dot(r, r)) <= target:
                break
            for i in range(n):
                z[i] = inv_diag[i] * r[i]
            rz_new = _dot(r, z)
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]


def _generic_pcg(A, b, x, tol, max_iter, apply_prec):
    target = tol * np.sqrt(b @ b)
    it = 0
    while True:
        r = b - A @ x
        rnorm = np.sqrt(r @ r)
        if rnorm <= target or it >= max_iter:
            return it, rnorm
        z = apply_prec(r)
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            q = A @ p
            step = rz / (p @ q)
            x += step * p
            r -= step * q
            it += 1
            if np.sqrt(r @ r) <= target:
                break
            z = apply_prec(r)
            rz_new = r @ z
            p *= rz_new / rz
            p += z
            rz = rz_new


def cg_solve(A, b, tol=DEFAULT_TOL, max_iter=None, x0=None, preconditioner=None):
    """Solve A x = b for symmetric positive definite A.

    Jacobi preconditioning unless ``preconditioner`` (a callable applying
    an SPD approximation of A^-1) is given.  Returns ``(x, report)``;
    non-convergence is reported, not raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = sp.csr_matrix(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = b.size
    if A.shape != (n, n):
        raise ValueError(f"matrix {A.shape} does not match right-hand side ({n},)")
    if max_iter is None:
        max_iter = 10 * n
    bnorm = float(np.sqrt(b @ b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if preconditioner is None:
        it, rnorm = _jacobi_pcg(A.indptr.astype(np.int64), A.indices.astype(np.int64),
                                np.ascontiguousarray(A.data), b, x, float(tol), int(max_iter))
    else:
        it, rnorm = _generic_pcg(A, b, x, float(tol), int(max_iter), preconditioner)
    rel = float(rnorm) / bnorm
    return x, SolveReport(int(it), rel, rel <= tol)
