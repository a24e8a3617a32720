"""Split free nodes into subdomain interiors and the interface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .mesh import DomainSpec, Mesh


@dataclass(frozen=True, eq=False)
class Partition:
    n_subdomains: int
    interior_of: list[np.ndarray]  # free-node indices interior to each subdomain
    interface: np.ndarray  # free-node indices on Gamma
    perm: np.ndarray  # position in [interiors..., interface] -> free-node index
    dim: int
    h: float
    H: float
    subdomain_size: float

    @property
    def n_free(self) -> int:
        return len(self.perm)

    @property
    def n_interior(self) -> int:
        return sum(len(i) for i in self.interior_of)

    @property
    def n_interface(self) -> int:
        return len(self.interface)

    @property
    def offsets(self) -> np.ndarray:
        """Start of each subdomain's block inside the interior ordering."""
        return np.concatenate([[0], np.cumsum([len(i) for i in self.interior_of])])

    def to_free(self, v_perm: np.ndarray) -> np.ndarray:
        out = np.empty_like(v_perm)
        out[self.perm] = v_perm
        return out

    def from_free(self, v_free: np.ndarray) -> np.ndarray:
        return np.asarray(v_free)[self.perm]

    def stats(self) -> dict:
        sizes = [len(i) for i in self.interior_of]
        return {
            "n_subdomains": self.n_subdomains,
            "n_free": self.n_free,
            "n_interface": self.n_interface,
            "interior_min": min(sizes),
            "interior_max": max(sizes),
            "interior_total": sum(sizes),
        }


def partition(mesh: Mesh, cells_per_subdomain: int = 1) -> Partition:
    """Subdomains are blocks of ``cells_per_subdomain``^dim coarse cells (default: the cells themselves)."""
    if cells_per_subdomain < 1:
        raise ConfigurationError("cells_per_subdomain must be a positive integer")
    width = mesh.ratio * cells_per_subdomain  # subdomain side in fine cells
    n_cells = mesh.spec.extent * int(round(1 / mesh.h))
    if n_cells % width or (mesh.spec is DomainSpec.L_SHAPE and (n_cells // 2) % width):
        raise ConfigurationError(
            f"{cells_per_subdomain} coarse cells per subdomain do not tile the {mesh.spec.value} domain at H={mesh.H}"
        )

    # Lowest lattice corner of an element is the corner of its fine cell.
    cell = mesh.lattice[mesh.elements].min(axis=1)
    keys, sub_of_element = np.unique(cell // width, axis=0, return_inverse=True)
    sub_of_element = sub_of_element.reshape(-1)
    n_sub = len(keys)

    free = np.flatnonzero(~mesh.boundary_node)
    on_gamma = np.any(mesh.lattice[free] % width == 0, axis=1)

    # A node off the subdomain skeleton sits strictly inside one subdomain.
    owner = np.full(mesh.n_nodes, -1, dtype=np.int64)
    owner[mesh.elements.ravel()] = np.repeat(sub_of_element, mesh.dim + 1)
    free_owner = owner[free]

    interior_of = [np.flatnonzero(~on_gamma & (free_owner == k)) for k in range(n_sub)]
    interface = np.flatnonzero(on_gamma)
    perm = np.concatenate(interior_of + [interface]).astype(np.int64)
    return Partition(
        n_subdomains=n_sub,
        interior_of=interior_of,
        interface=interface,
        perm=perm,
        dim=mesh.dim,
        h=mesh.h,
        H=mesh.H,
        subdomain_size=mesh.H * cells_per_subdomain,
    )


@dataclass(frozen=True, eq=False)
class BlockView:
    """The 2x2 block split of ``A`` and ``M`` in partition order."""

    partition: Partition
    A: sp.csr_matrix  # permuted, full
    M: sp.csr_matrix
    A_II: sp.csr_matrix = field(repr=False)
    A_IB: sp.csr_matrix = field(repr=False)
    A_BB: sp.csr_matrix = field(repr=False)
    M_II: sp.csr_matrix = field(repr=False)
    M_IB: sp.csr_matrix = field(repr=False)
    M_BB: sp.csr_matrix = field(repr=False)

    @property
    def A_BI(self) -> sp.csr_matrix:
        return self.A_IB.T.tocsr()

    @property
    def M_BI(self) -> sp.csr_matrix:
        return self.M_IB.T.tocsr()

    def subdomain_slice(self, k: int) -> slice:
        off = self.partition.offsets
        return slice(int(off[k]), int(off[k + 1]))

    def interior_block(self, mat: sp.csr_matrix, k: int) -> sp.csr_matrix:
        s = self.subdomain_slice(k)
        return mat[s, s]


def blocks(A: sp.spmatrix, M: sp.spmatrix, p: Partition) -> BlockView:
    if A.shape != (p.n_free, p.n_free) or M.shape != A.shape:
        raise ValueError(f"matrix shape {A.shape} does not match {p.n_free} free nodes")
    perm = p.perm
    Ap = sp.csr_matrix(A)[perm][:, perm].tocsr()
    Mp = sp.csr_matrix(M)[perm][:, perm].tocsr()
    nI = p.n_interior

    def split(mat):
        II = mat[:nI, :nI].tocsr()
        IB = mat[:nI, nI:].tocsr()
        BI = mat[nI:, :nI].tocsr()
        BB = mat[nI:, nI:].tocsr()
        diff = (IB - BI.T).tocsr()
        scale = abs(mat).max() if mat.nnz else 1.0
        if diff.nnz and abs(diff).max() > 1e-14 * scale:
            raise ValueError("matrix is not symmetric across the interior/interface split")
        return II, IB, BB

    A_II, A_IB, A_BB = split(Ap)
    M_II, M_IB, M_BB = split(Mp)
    return BlockView(p, Ap, Mp, A_II, A_IB, A_BB, M_II, M_IB, M_BB)


def coercivity_threshold(bv: BlockView) -> float:
    """Smallest eigenvalue of ``(A_II, M_II)``, i.e. the minimum over subdomains.

    Returns ``inf`` when there are no interior unknowns.
    """
    from .eigensolvers import EigRequest, reference_volume_eig

    best = np.inf
    for k in range(bv.partition.n_subdomains):
        s = bv.subdomain_slice(k)
        if s.stop == s.start:
            continue
        res = reference_volume_eig(bv.A_II[s, s], bv.M_II[s, s], EigRequest(tol=1e-13))
        best = min(best, float(res.values[0]))
    return best
