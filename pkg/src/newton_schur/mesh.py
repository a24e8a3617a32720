"""Structured simplicial meshes nested in a coarse grid.

Squares are cut into two triangles along the (+1, +1) diagonal, cubes into
the six Kuhn tetrahedra sharing the main diagonal.  Every mesh carries the
coarse cell of each element; the coarse cells are later used as the
subdomains of the decomposition.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


class DomainSpec(enum.Enum):
    UNIT_SQUARE = "square"
    UNIT_CUBE = "cube"
    L_SHAPE = "lshape"

    @property
    def dim(self) -> int:
        return 3 if self is DomainSpec.UNIT_CUBE else 2

    @property
    def volume(self) -> float:
        return 3.0 if self is DomainSpec.L_SHAPE else 1.0

    @property
    def origin(self) -> float:
        """Lower corner coordinate along every axis."""
        return -1.0 if self is DomainSpec.L_SHAPE else 0.0

    @property
    def extent(self) -> int:
        """Side length of the bounding box."""
        return 2 if self is DomainSpec.L_SHAPE else 1

    @classmethod
    def parse(cls, name: str | "DomainSpec") -> "DomainSpec":
        if isinstance(name, cls):
            return name
        aliases = {
            "square": cls.UNIT_SQUARE,
            "unitsquare": cls.UNIT_SQUARE,
            "cube": cls.UNIT_CUBE,
            "unitcube": cls.UNIT_CUBE,
            "lshape": cls.L_SHAPE,
            "lshape2d": cls.L_SHAPE,
            "l-shape": cls.L_SHAPE,
        }
        try:
            return aliases[str(name).lower().replace("_", "")]
        except KeyError:
            raise ConfigurationError(f"unknown domain {name!r}") from None


@dataclass(frozen=True, eq=False)
class Mesh:
    spec: DomainSpec
    nodes: np.ndarray  # (n_nodes, dim) float
    elements: np.ndarray  # (n_elements, dim + 1) int, positively oriented
    boundary_node: np.ndarray  # (n_nodes,) bool
    coarse_cell_of_element: np.ndarray  # (n_elements,) int
    h: float
    H: float
    lattice: np.ndarray  # (n_nodes, dim) int, node coordinates in units of h

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_coarse_cells(self) -> int:
        return int(self.coarse_cell_of_element.max()) + 1

    @property
    def ratio(self) -> int:
        """Number of fine cells per coarse cell along one axis."""
        return int(round(self.H / self.h))

    def signed_volumes(self) -> np.ndarray:
        p = self.nodes[self.elements]
        edges = p[:, 1:, :] - p[:, :1, :]
        return np.linalg.det(edges) / math.factorial(self.dim)

    def diameters(self) -> np.ndarray:
        p = self.nodes[self.elements]
        diam = np.zeros(self.n_elements)
        for i, j in itertools.combinations(range(self.dim + 1), 2):
            diam = np.maximum(diam, np.linalg.norm(p[:, i] - p[:, j], axis=1))
        return diam


def _log2_size(value: float, name: str) -> int:
    if not (0.0 < value < 1.0):
        raise ConfigurationError(f"{name}={value} must lie in (0, 1)")
    j = -math.log2(value)
    if abs(j - round(j)) > 1e-12:
        raise ConfigurationError(f"{name}={value} is not a power of 1/2")
    return int(round(j))


def _cell_in_domain(spec: DomainSpec, cells: np.ndarray, n: int) -> np.ndarray:
    # The L-shape is (-1, 1)^2 minus the closed upper-right quadrant [0, 1)^2.
    if spec is DomainSpec.L_SHAPE:
        half = n // 2
        return ~((cells[:, 0] >= half) & (cells[:, 1] >= half))
    return np.ones(len(cells), dtype=bool)


def _simplex_pattern(dim: int) -> list[list[tuple[int, ...]]]:
    """Local vertex offsets of the simplices filling one unit cell."""
    if dim == 2:
        return [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]]
    simplices = []
    for perm in itertools.permutations(range(3)):
        verts = [(0, 0, 0)]
        corner = [0, 0, 0]
        for axis in perm:
            corner[axis] = 1
            verts.append(tuple(corner))
        edges = np.array(verts[1:]) - np.array(verts[0])
        if np.linalg.det(edges) < 0:
            verts[2], verts[3] = verts[3], verts[2]
        simplices.append(verts)
    return simplices


def build_mesh(spec: DomainSpec | str, H: float, h: float) -> Mesh:
    """Mesh of size ``h`` whose elements tile the coarse cells of size ``H``."""
    spec = DomainSpec.parse(spec)
    jH = _log2_size(H, "H")
    jh = _log2_size(h, "h")
    if jh < jH:
        raise ConfigurationError(f"fine size h={h} must not exceed coarse size H={H}")

    dim = spec.dim
    n = spec.extent * 2**jh
    ratio = 2 ** (jh - jH)

    cells = np.array(list(itertools.product(range(n), repeat=dim)), dtype=np.int64)
    cells = cells[_cell_in_domain(spec, cells, n)]

    # Coarse cells numbered lexicographically among those inside the domain.
    coarse_idx = cells // ratio
    nc = n // ratio
    coarse_all = np.array(list(itertools.product(range(nc), repeat=dim)), dtype=np.int64)
    coarse_all = coarse_all[_cell_in_domain(spec, coarse_all, nc)]
    coarse_key = np.ravel_multi_index(coarse_all.T, (nc,) * dim)
    coarse_number = np.full(nc**dim, -1, dtype=np.int64)
    coarse_number[coarse_key] = np.arange(len(coarse_all))

    # Lattice nodes touched by an included cell, ordered lexicographically.
    shape = (n + 1,) * dim
    offsets = np.array(list(itertools.product((0, 1), repeat=dim)), dtype=np.int64)
    corner_keys = np.ravel_multi_index(
        (cells[:, None, :] + offsets[None, :, :]).reshape(-1, dim).T, shape
    )
    keys, touch_count = np.unique(corner_keys, return_counts=True)
    lattice = np.stack(np.unravel_index(keys, shape), axis=1)
    order = np.lexsort(lattice.T[::-1])
    keys, touch_count, lattice = keys[order], touch_count[order], lattice[order]
    node_of_key = np.full(np.prod(shape), -1, dtype=np.int64)
    node_of_key[keys] = np.arange(len(keys))

    elements = []
    coarse_of_element = []
    cell_coarse = coarse_number[np.ravel_multi_index(coarse_idx.T, (nc,) * dim)]
    for verts in _simplex_pattern(dim):
        local = np.array(verts, dtype=np.int64)
        corners = cells[:, None, :] + local[None, :, :]
        idx = node_of_key[np.ravel_multi_index(corners.reshape(-1, dim).T, shape)]
        elements.append(idx.reshape(len(cells), dim + 1))
        coarse_of_element.append(cell_coarse)
    # Interleave so the simplices of one cell are adjacent.
    elements = np.stack(elements, axis=1).reshape(-1, dim + 1)
    coarse_of_element = np.stack(coarse_of_element, axis=1).reshape(-1)

    boundary = touch_count < 2**dim
    nodes = lattice.astype(float) * h + spec.origin

    for arr in (nodes, elements, boundary, coarse_of_element, lattice):
        arr.setflags(write=False)
    return Mesh(
        spec=spec,
        nodes=nodes,
        elements=elements,
        boundary_node=boundary,
        coarse_cell_of_element=coarse_of_element,
        h=float(h),
        H=float(H),
        lattice=lattice,
    )


def coarse_mesh(spec: DomainSpec | str, H: float) -> Mesh:
    return build_mesh(spec, H, H)


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    """Dump nodes ("x y [z]") then elements (0-based node indices)."""
    with open(path, "w") as fh:
        fh.write(f"# nodes {mesh.n_nodes}\n")
        for x in mesh.nodes:
            fh.write(" ".join(repr(float(c)) for c in x) + "\n")
        fh.write(f"# elements {mesh.n_elements}\n")
        for e in mesh.elements:
            fh.write(" ".join(str(int(i)) for i in e) + "\n")


def read_mesh_text(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    nodes, elements = [], []
    target = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# nodes"):
            target = nodes
        elif line.startswith("# elements"):
            target = elements
        elif line.strip():
            target.append(line.split())
    return np.array(nodes, dtype=float), np.array(elements, dtype=np.int64)
