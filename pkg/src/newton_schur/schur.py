"""Shifted Schur complement ``S_rho`` and the discrete a_rho-harmonic extension.

Everything is applied matrix-free through sparse factorizations of the
shifted interior blocks ``A_kk - rho M_kk``, one per subdomain.  Since
``A_II`` is block diagonal, an interior solve splits into independent
subdomain solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ShiftTooLargeError
from .partition import BlockView

PIVOT_TOL = 1e-13


@dataclass(frozen=True)
class InterfaceMass:
    """Scaled identity ``h^(d-1) I`` used as the inner product on the interface."""

    scale: float

    @classmethod
    def for_mesh(cls, h: float, dim: int) -> "InterfaceMass":
        return cls(h ** (dim - 1))

    def inner(self, u: np.ndarray, w: np.ndarray) -> float:
        return self.scale * float(np.dot(u, w))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def matrix(self, n: int) -> sp.dia_matrix:
        return self.scale * sp.identity(n, format="dia")


class _SubdomainFactor:
    """Sparse LDL^T-style factorization of one SPD interior block.

    SuperLU run with symmetric pivoting (diagonal pivots only) so the
    diagonal of ``U`` holds the pivots of a symmetric factorization and its
    signs give the inertia of the block.
    """

    def __init__(self, K: sp.spmatrix, pivot_tol: float, scale: float | None = None):
        K = sp.csc_matrix(K)
        self.n = K.shape[0]
        diag = K.diagonal()
        # ``scale`` is the size of the terms that cancel in K = A - rho M.
        diag_max = float(scale) if scale is not None else float(np.max(np.abs(diag)))
        self._dense = None
        self._lu = None
        # A positive definite block has a positive diagonal; this also catches
        # entries cancelled to structural zeros, which SuperLU would not flag.
        if diag_max == 0.0 or diag.min() <= pivot_tol * diag_max:
            self.min_pivot = float(diag.min()) / diag_max if diag_max else 0.0
            self.ok = False
            return
        try:
            self._lu = splu(
                K,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError:  # exactly singular
            self._lu = None
            self.min_pivot = 0.0
            self.ok = False
            return
        if np.array_equal(self._lu.perm_r, self._lu.perm_c):
            pivots = self._lu.U.diagonal()
            self.min_pivot = float(pivots.min()) / diag_max
        else:
            # SuperLU left the diagonal; fall back to a dense Cholesky for this block.
            self._lu = None
            Kd = K.toarray()
            try:
                self._dense = sla.cho_factor(Kd, lower=True)
                self.min_pivot = float(np.min(np.diag(self._dense[0])) ** 2) / diag_max
            except np.linalg.LinAlgError:
                self.min_pivot = float(np.linalg.eigvalsh(Kd)[0]) / diag_max
        self.ok = self.min_pivot > pivot_tol

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(rhs)
        return sla.cho_solve(self._dense, rhs)


class SchurContext:
    """Operators ``S_rho`` and ``H_rho`` for a fixed shift ``rho``."""

    def __init__(self, bv: BlockView, rho: float, pivot_tol: float = PIVOT_TOL):
        p = bv.partition
        self.rho = float(rho)
        self.blocks = bv
        self.dim = p.dim
        self.h = p.h
        self.mass = InterfaceMass.for_mesh(p.h, p.dim)
        self.n_interior = p.n_interior
        self.n_interface = p.n_interface

        self.K_IB = (bv.A_IB - self.rho * bv.M_IB).tocsr()
        self.K_BI = self.K_IB.T.tocsr()
        self.K_BB = (bv.A_BB - self.rho * bv.M_BB).tocsr()
        K_II = (bv.A_II - self.rho * bv.M_II).tocsr()

        self._slices = []
        self._factors = []
        for k in range(p.n_subdomains):
            s = bv.subdomain_slice(k)
            if s.stop == s.start:
                continue
            a_diag = np.abs(bv.A_II[s, s].diagonal()).max()
            scale = a_diag + abs(self.rho) * np.abs(bv.M_II[s, s].diagonal()).max()
            f = _SubdomainFactor(K_II[s, s], pivot_tol, scale)
            if not f.ok:
                raise ShiftTooLargeError(self.rho, k, f.min_pivot)
            self._slices.append(s)
            self._factors.append(f)

    def interior_solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty_like(rhs, dtype=float)
        for s, f in zip(self._slices, self._factors):
            out[s] = f.solve(rhs[s])
        return out

    def _check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_interface:
            raise ValueError(f"interface vector has length {u.shape[0]}, expected {self.n_interface}")
        return u

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = self._check(u)
        if self.n_interior == 0:
            return self.K_BB @ u
        return self.K_BB @ u - self.K_BI @ self.interior_solve(self.K_IB @ u)

    def extend(self, u: np.ndarray) -> np.ndarray:
        """Volume vector (partition order) with trace ``u`` and zero interior residual."""
        u = self._check(u)
        if self.n_interior == 0:
            return u.copy()
        return np.concatenate([-self.interior_solve(self.K_IB @ u), u])

    def energy(self, v: np.ndarray) -> float:
        """a_rho(v, v) for a volume vector in partition order."""
        bv = self.blocks
        return float(v @ (bv.A @ v) - self.rho * (v @ (bv.M @ v)))

    def dense(self) -> np.ndarray:
        """Explicit ``S_rho``; column work is restricted to each subdomain's interface neighbours."""
        S = self.K_BB.toarray()
        for s, f in zip(self._slices, self._factors):
            rows = self.K_IB[s]
            cols = np.unique(rows.indices)
            if len(cols) == 0:
                continue
            X = f.solve(rows[:, cols].toarray())
            S[np.ix_(cols, cols)] -= rows[:, cols].T @ X
        return 0.5 * (S + S.T)


def make_context(bv: BlockView, rho: float, pivot_tol: float = PIVOT_TOL) -> SchurContext:
    return SchurContext(bv, rho, pivot_tol)


def apply_schur(ctx: SchurContext, u: np.ndarray) -> np.ndarray:
    return ctx.apply(u)


def extend(ctx: SchurContext, u: np.ndarray) -> np.ndarray:
    return ctx.extend(u)


def extension_norm_ratio(ctx: SchurContext, u: np.ndarray) -> float:
    """``||H_rho u||_M / ||u||_Gamma``."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValueError("extension ratio of the zero vector is undefined")
    v = ctx.extend(u)
    return float(np.sqrt(v @ (ctx.blocks.M @ v))) / ctx.mass.norm(u)


def dense_schur_oracle(bv: BlockView, rho: float) -> np.ndarray:
    """Schur complement from fully dense blocks; independent of the factorized path."""
    nI = bv.partition.n_interior
    K = (bv.A - rho * bv.M).toarray()
    KII, KIB, KBB = K[:nI, :nI], K[:nI, nI:], K[nI:, nI:]
    if nI == 0:
        return KBB
    return KBB - KIB.T @ np.linalg.solve(KII, KIB)


def write_dense_coo(S: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for i in range(S.shape[0]):
            for j in range(i + 1):
                if S[i, j] != 0.0:
                    fh.write(f"{i} {j} {float(S[i, j])!r}\n")
