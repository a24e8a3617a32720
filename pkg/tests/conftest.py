from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pytest
import scipy.linalg as sla

from newton_schur import assemble, blocks, build_mesh, coarse_rho0, partition, reference_volume_eig


@dataclass
class Problem:
    mesh: object
    A: object
    M: object
    part: object
    bv: object
    lam: float
    rho0: float


@lru_cache(maxsize=None)
def problem(domain: str, H: float, h: float, cells_per_subdomain: int = 1) -> Problem:
    mesh = build_mesh(domain, H, h)
    A, M, _ = assemble(mesh)
    part = partition(mesh, cells_per_subdomain)
    bv = blocks(A, M, part)
    lam = float(reference_volume_eig(A, M).values[0])
    return Problem(mesh, A, M, part, bv, lam, coarse_rho0(domain, H))


def dense_smallest(A, M) -> tuple[float, np.ndarray]:
    vals, vecs = sla.eigh(A.toarray(), M.toarray())
    return float(vals[0]), vecs[:, 0]


@pytest.fixture
def square_small():
    return problem("square", 0.25, 0.0625)


@pytest.fixture
def cube_small():
    return problem("cube", 0.5, 0.125)


@pytest.fixture
def lshape_small():
    return problem("lshape", 0.25, 0.0625)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
