"""Smallest eigenpairs of the interface problem and of the volume pencil.

The interface operator ``S_rho`` is symmetric but indefinite once
``rho > lambda_h``, so its smallest *algebraic* eigenvalue is wanted.  Since
the interface mass is ``h^(d-1) I``, the generalized problem is the standard
one for ``S_rho / h^(d-1)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import ConvergenceError
from .schur import SchurContext

log = logging.getLogger(__name__)

DENSE_INTERFACE_LIMIT = 2000
DENSE_VOLUME_LIMIT = 1500


@dataclass(frozen=True)
class EigRequest:
    k: int = 1
    tol: float = 1e-12
    max_iters: int = 5000
    seed: int = 0
    method: str = "auto"  # "auto" | "dense" | "lanczos"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.method not in ("auto", "dense", "lanczos"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class EigResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns, unit norm in the problem's inner product
    residuals: np.ndarray
    iterations: int = 0
    method: str = ""
    extra: dict = field(default_factory=dict)


def _start_vector(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def _orthogonalize(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    # Classical Gram-Schmidt, done twice.
    for _ in range(2):
        w = w - V @ (V.T @ w)
    return w


def lanczos_smallest(
    matvec: Callable[[np.ndarray], np.ndarray],
    n: int,
    k: int = 1,
    tol: float = 1e-12,
    max_iters: int = 5000,
    v0: np.ndarray | None = None,
    seed: int = 0,
    krylov_dim: int | None = None,
) -> EigResult:
    """Thick-restart Lanczos with full reorthogonalization.

    Returns the ``k`` smallest algebraic eigenpairs of a symmetric operator.
    A pair counts as converged when ``||A y - theta y|| <= tol * scale`` where
    ``scale`` is the largest Ritz value magnitude seen so far (an estimate of
    ``||A||``).  ``iterations`` counts operator applications.
    """
    m = krylov_dim or min(n, max(2 * k + 40, 80))
    m = min(m, n)
    keep = min(max(k + 10, m // 3), m - 1) if m > 1 else 0

    rng = np.random.default_rng(seed)
    v = np.asarray(v0, dtype=float).copy() if v0 is not None else rng.standard_normal(n)
    if not np.any(v):
        v = rng.standard_normal(n)
    V = np.zeros((n, m))
    AV = np.zeros((n, m))
    V[:, 0] = v / np.linalg.norm(v)
    AV[:, 0] = matvec(V[:, 0])
    j = 1
    applications = 1
    scale = 0.0
    best = np.inf
    theta = Y = res = None

    while True:
        # Expand the basis to m columns.
        while j < m:
            w = _orthogonalize(AV[:, j - 1].copy(), V[:, :j])
            nw = np.linalg.norm(w)
            if nw <= 1e-10 * max(scale, np.linalg.norm(AV[:, j - 1]), 1e-300):
                # Invariant subspace: continue with a fresh random direction.
                w = _orthogonalize(rng.standard_normal(n), V[:, :j])
                nw = np.linalg.norm(w)
            V[:, j] = w / nw
            AV[:, j] = matvec(V[:, j])
            applications += 1
            j += 1
            if j == n:
                break

        T = V[:, :j].T @ AV[:, :j]
        T = 0.5 * (T + T.T)
        evals, S = np.linalg.eigh(T)
        scale = max(scale, float(np.max(np.abs(evals))))
        Y = V[:, :j] @ S
        AY = AV[:, :j] @ S
        R = AY[:, :k] - Y[:, :k] * evals[:k]
        res = np.linalg.norm(R, axis=0)
        theta = evals
        best = min(best, float(res.max()))
        if np.all(res <= tol * max(scale, 1.0)) or j == n:
            break
        if applications >= max_iters:
            raise ConvergenceError("Lanczos did not converge", best / max(scale, 1.0), applications)

        # Thick restart: keep the smallest Ritz vectors plus the next Krylov direction.
        w = _orthogonalize(AV[:, j - 1].copy(), V[:, :j])
        nw = np.linalg.norm(w)
        keep_now = min(keep, j - 1)
        V[:, :keep_now] = Y[:, :keep_now]
        AV[:, :keep_now] = AY[:, :keep_now]
        if nw <= 1e-10 * scale:
            w = rng.standard_normal(n)
        w = _orthogonalize(w, V[:, :keep_now])
        V[:, keep_now] = w / np.linalg.norm(w)
        AV[:, keep_now] = matvec(V[:, keep_now])
        applications += 1
        j = keep_now + 1

    vecs = Y[:, :k] / np.linalg.norm(Y[:, :k], axis=0)
    return EigResult(
        values=theta[:k].copy(),
        vectors=vecs,
        residuals=res / max(scale, 1.0),
        iterations=applications,
        method="lanczos",
        extra={"scale": scale},
    )


def _dense_smallest(Op: np.ndarray, k: int) -> EigResult:
    n = Op.shape[0]
    k = min(k, n)
    vals, vecs = sla.eigh(Op, subset_by_index=[0, k - 1])
    scale = max(float(np.max(np.abs(np.diag(Op)))), 1.0)
    res = np.linalg.norm(Op @ vecs - vecs * vals, axis=0) / scale
    return EigResult(values=vals, vectors=vecs, residuals=res, iterations=0, method="dense")


def smallest_interface_eig(
    ctx: SchurContext, req: EigRequest = EigRequest(), v0: np.ndarray | None = None
) -> EigResult:
    """Smallest eigenpair(s) of ``S_rho u = theta h^(d-1) u``.

    Vectors are normalized so that ``||u||_Gamma = 1``.
    """
    n = ctx.n_interface
    s = ctx.mass.scale
    method = req.method
    if method == "auto":
        method = "dense" if n <= DENSE_INTERFACE_LIMIT else "lanczos"
    if method == "dense":
        res = _dense_smallest(ctx.dense() / s, req.k)
    else:
        res = lanczos_smallest(
            lambda u: ctx.apply(u) / s,
            n,
            k=req.k,
            tol=req.tol,
            max_iters=req.max_iters,
            v0=v0,
            seed=req.seed,
        )
    # Fix the sign for reproducibility: largest-magnitude entry positive.
    vecs = res.vectors
    for i in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, i])), i] < 0:
            vecs[:, i] = -vecs[:, i]
    res.vectors = vecs / np.sqrt(s)
    return res


def interface_gap(ctx: SchurContext, k: int = 3, req: EigRequest | None = None) -> tuple[float, ...]:
    """The ``k`` smallest interface eigenvalues; ``g_rho`` is the first difference."""
    if ctx.n_interface < k:
        raise ValueError(f"need at least {k} interface unknowns, have {ctx.n_interface}")
    base = req or EigRequest()
    res = smallest_interface_eig(
        ctx, EigRequest(k=k, tol=base.tol, max_iters=base.max_iters, seed=base.seed, method=base.method)
    )
    return tuple(float(x) for x in res.values)


def reference_volume_eig(
    A: sp.spmatrix, M: sp.spmatrix, req: EigRequest = EigRequest(tol=1e-13), sigma: float = 0.0
) -> EigResult:
    """Smallest eigenpairs of ``A v = lambda M v`` for SPD ``A`` and ``M``.

    Small problems are solved densely; larger ones by ARPACK in shift-invert
    mode about ``sigma``.  The default ``sigma = 0`` targets the bottom of the
    spectrum of an SPD pencil regardless of how far the smallest eigenvalue is
    from any estimate.
    """
    n = A.shape[0]
    k = min(req.k, n)
    if n <= DENSE_VOLUME_LIMIT or req.method == "dense" or k >= n - 1:
        vals, vecs = sla.eigh(A.toarray(), M.toarray(), subset_by_index=[0, k - 1])
        method = "dense"
        iterations = 0
    else:
        v0 = _start_vector(n, req.seed)
        vals, vecs = eigsh(
            sp.csc_matrix(A),
            k=k,
            M=sp.csc_matrix(M),
            sigma=sigma,
            which="LM",
            v0=v0,
            tol=min(req.tol, 1e-14),
            maxiter=req.max_iters,
        )
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        method = "shift-invert"
        iterations = -1
    # Normalize in the M inner product, positive largest entry, and polish by Rayleigh quotient.
    for i in range(k):
        v = vecs[:, i]
        v = v / np.sqrt(v @ (M @ v))
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        vecs[:, i] = v
        vals[i] = float(v @ (A @ v))
    Mv = M @ vecs
    res = np.linalg.norm(A @ vecs - Mv * vals, axis=0) / np.linalg.norm(Mv, axis=0)
    res = res / np.maximum(np.abs(vals), 1.0)
    return EigResult(values=np.asarray(vals), vectors=vecs, residuals=res, iterations=iterations, method=method)


def coarse_rho0(spec, H: float, coeff=None) -> float:
    """Smallest eigenvalue on the coarse mesh, the Newton starting shift."""
    from .assembly import assemble
    from .mesh import coarse_mesh

    A, M, _ = assemble(coarse_mesh(spec, H), coeff)
    return float(reference_volume_eig(A, M).values[0])
