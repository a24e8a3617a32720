"""P1 stiffness and consistent mass matrices with Dirichlet elimination."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigurationError
from .mesh import Mesh

# Coefficient fields map element centroids (m, dim) to symmetric (m, dim, dim) tensors.
CoefficientField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Coefficient:
    name: str
    field: CoefficientField

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.field(np.atleast_2d(x))


def _identity(x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(x.shape[1]), (len(x), x.shape[1], x.shape[1])).copy()


def _anisotropic(x: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    diag = np.arange(1, d + 1, dtype=float)
    return np.broadcast_to(np.diag(diag), (len(x), d, d)).copy()


def _variable(x: np.ndarray) -> np.ndarray:
    # 2 + x_0 on the diagonal plus a small symmetric off-diagonal part; SPD on [-1, 1]^d.
    d = x.shape[1]
    c = np.zeros((len(x), d, d))
    for i in range(d):
        c[:, i, i] = 2.0 + x[:, 0]
    if d > 1:
        c[:, 0, 1] = c[:, 1, 0] = 0.25 * x[:, 1]
    return c


COEFFICIENTS = {
    "laplace": Coefficient("laplace", _identity),
    "anisotropic": Coefficient("anisotropic", _anisotropic),
    "variable": Coefficient("variable", _variable),
}

LAPLACE = COEFFICIENTS["laplace"]


def get_coefficient(name: str | Coefficient | None) -> Coefficient:
    if name is None:
        return LAPLACE
    if isinstance(name, Coefficient):
        return name
    try:
        return COEFFICIENTS[name]
    except KeyError:
        raise ConfigurationError(f"unknown coefficient {name!r}; choose from {sorted(COEFFICIENTS)}") from None


def local_matrices(mesh: Mesh, coeff: Coefficient) -> tuple[np.ndarray, np.ndarray]:
    """Element stiffness and mass matrices, each of shape (m, dim+1, dim+1)."""
    d = mesh.dim
    p = mesh.nodes[mesh.elements]
    jac = (p[:, 1:, :] - p[:, :1, :]).transpose(0, 2, 1)  # columns are edge vectors
    det = np.linalg.det(jac)
    vol = det / math.factorial(d)
    if np.any(np.abs(vol) <= 1e-14 * mesh.h**d):
        bad = int(np.argmin(np.abs(vol)))
        raise AssemblyError(f"degenerate element {bad} with volume {vol[bad]:.3e}")
    vol = np.abs(vol)

    # Barycentric gradients: rows 1..d are inv(J)^T e_i, row 0 is minus their sum.
    inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
    grads = np.concatenate([-inv_t.sum(axis=2, keepdims=True), inv_t], axis=2)  # (m, d, d+1)
    centroids = p.mean(axis=1)
    a = coeff(centroids)
    stiff = vol[:, None, None] * np.einsum("mki,mkl,mlj->mij", grads, a, grads)

    base = np.ones((d + 1, d + 1)) + np.eye(d + 1)
    mass = (vol / ((d + 1) * (d + 2)))[:, None, None] * base[None]
    return stiff, mass


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    e = mesh.elements
    k = e.shape[1]
    rows = np.repeat(e, k, axis=1).ravel()
    cols = np.tile(e, (1, k)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return mat.tocsr()


def assemble_full(mesh: Mesh, coeff: Coefficient | str | None = None) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Stiffness and mass over all nodes, boundary included."""
    stiff, mass = local_matrices(mesh, get_coefficient(coeff))
    return _scatter(mesh, stiff), _scatter(mesh, mass)


def assemble(
    mesh: Mesh, coeff: Coefficient | str | None = None
) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
    """Return ``(A, M, free_nodes)`` with Dirichlet rows and columns removed."""
    A, M = assemble_full(mesh, coeff)
    free = np.flatnonzero(~mesh.boundary_node)
    A = A[free][:, free].tocsr()
    M = M[free][:, free].tocsr()
    # Symmetrize away the last-bit asymmetry left by summation order.
    A = ((A + A.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    A.sort_indices()
    M.sort_indices()
    return A, M, free


def rayleigh_quotient(A, M, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("Rayleigh quotient of the zero vector is undefined")
    return float(v @ (A @ v)) / float(v @ (M @ v))


def write_coo(mat: sp.spmatrix, path) -> None:
    """Write the lower triangle as ``i j value`` lines, 0-based."""
    low = sp.tril(mat).tocoo()
    order = np.lexsort((low.col, low.row))
    with open(path, "w") as fh:
        for i, j, v in zip(low.row[order], low.col[order], low.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")
