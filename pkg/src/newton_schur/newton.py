"""Newton iteration on ``theta(rho) = 0`` for the shifted Schur complement.

Each step solves the interface eigenproblem at the current shift, extends
the eigenvector harmonically into the subdomains and takes the Rayleigh
quotient of the extension as the new shift.  That quotient coincides with
the Newton update ``rho - theta / theta'`` because
``theta' = -||H_rho u||_M^2 / ||u||_Gamma^2``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .eigensolvers import EigRequest, interface_gap, smallest_interface_eig
from .errors import ConfigurationError, NewtonSchurError, ShiftTooLargeError
from .partition import BlockView
from .schur import SchurContext, extension_norm_ratio, make_context

log = logging.getLogger(__name__)

# Reference eigenvalues are trusted to about this relative accuracy.
ORACLE_TOL = 1e-13


@dataclass(frozen=True)
class NewtonConfig:
    rho0: float
    tol_rel_step: float = 1e-13
    tol_err: float = 1e-12
    max_steps: int = 12
    oracle_lambda: float | None = None
    eig: EigRequest = EigRequest()
    warm_start: bool = True
    diag_gap: bool = False
    diag_extension: bool = False
    diag_derivative: bool = False

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be at least 1")
        if self.oracle_lambda is not None and self.rho0 < self.oracle_lambda * (1 - 1e-12):
            raise ConfigurationError(
                f"initial shift {self.rho0} lies below the reference eigenvalue {self.oracle_lambda}"
            )


@dataclass
class NewtonStep:
    k: int
    rho: float
    theta: float
    u_norm: float
    dtheta: float
    rho_next: float
    newton_form: float
    identity_dev: float
    residual: float
    wall_ms: float
    ext_ratio: float | None = None
    gap: tuple[float, ...] | None = None
    dtheta_fd: float | None = None


@dataclass
class NewtonTrace:
    rho: list[float]  # rho_0, rho_1, ...
    steps: list[NewtonStep] = field(default_factory=list)
    lambda_ref: float | None = None
    converged: bool = False
    u: np.ndarray | None = None  # last interface eigenvector
    v: np.ndarray | None = None  # last extension, partition order

    @property
    def final(self) -> float:
        return self.rho[-1]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def theta(self) -> list[float | None]:
        out: list[float | None] = [s.theta for s in self.steps]
        return out + [None] * (len(self.rho) - len(out))

    def eps(self) -> list[float] | None:
        if self.lambda_ref is None:
            return None
        lam = self.lambda_ref
        return [float((r - lam) / lam) for r in self.rho]


def newton_identity_check(A, M, rho: float, theta: float, u: np.ndarray, v: np.ndarray, mass_scale: float) -> float:
    """Relative gap between the Rayleigh-quotient update and ``rho - theta/theta'``.

    ``v`` is the extension of ``u`` in the same ordering as ``A`` and ``M``.
    """
    vMv = float(v @ (M @ v))
    rq = float(v @ (A @ v)) / vMv
    dtheta = -vMv / (mass_scale * float(u @ u))
    return abs(rq - (rho - theta / dtheta)) / abs(rho)


def theta_derivative(ctx: SchurContext, u: np.ndarray) -> float:
    v = ctx.extend(u)
    return -float(v @ (ctx.blocks.M @ v)) / ctx.mass.inner(u, u)


def run_newton(bv: BlockView, cfg: NewtonConfig) -> NewtonTrace:
    lam = cfg.oracle_lambda
    trace = NewtonTrace(rho=[float(cfg.rho0)], lambda_ref=lam)
    A, M = bv.A, bv.M
    rho = float(cfg.rho0)
    u_prev = None

    for k in range(cfg.max_steps):
        if lam is not None and (rho - lam) / lam < cfg.tol_err:
            trace.converged = True
            break
        t0 = time.perf_counter()
        try:
            ctx = make_context(bv, rho)
        except ShiftTooLargeError as exc:
            if k == 0:
                raise ConfigurationError(f"initial shift is not below the coercivity threshold: {exc}") from exc
            raise NewtonSchurError(f"iterate left the admissible shift range at step {k}: {exc}") from exc
        eig = smallest_interface_eig(ctx, cfg.eig, v0=u_prev if cfg.warm_start else None)
        theta = float(eig.values[0])
        u = eig.vectors[:, 0]
        v = ctx.extend(u)
        vMv = float(v @ (M @ v))
        rho_next = float(v @ (A @ v)) / vMv
        u_norm = ctx.mass.norm(u)
        dtheta = -vMv / u_norm**2
        newton_form = rho - theta / dtheta
        step = NewtonStep(
            k=k,
            rho=rho,
            theta=theta,
            u_norm=u_norm,
            dtheta=dtheta,
            rho_next=rho_next,
            newton_form=newton_form,
            identity_dev=abs(rho_next - newton_form) / abs(rho),
            residual=float(eig.residuals[0]),
            wall_ms=0.0,
        )
        if cfg.diag_extension:
            step.ext_ratio = extension_norm_ratio(ctx, u)
        if cfg.diag_gap and ctx.n_interface >= 3:
            step.gap = interface_gap(ctx, 3, cfg.eig)
        if cfg.diag_derivative:
            step.dtheta_fd = _fd_derivative(bv, rho, cfg.eig)
        step.wall_ms = (time.perf_counter() - t0) * 1e3
        trace.steps.append(step)
        trace.rho.append(rho_next)
        trace.u, trace.v = u, v
        log.debug("step %d rho=%.16g theta=%.3e -> %.16g", k, rho, theta, rho_next)

        u_prev = u
        step_size = abs(rho_next - rho)
        rho = rho_next
        if step_size <= cfg.tol_rel_step * abs(step.rho):
            trace.converged = True
            break
    else:
        if lam is not None and (rho - lam) / lam < cfg.tol_err:
            trace.converged = True
    return trace


def _fd_derivative(bv: BlockView, rho: float, req: EigRequest) -> float:
    delta = 1e-4 * abs(rho)
    plus = smallest_interface_eig(make_context(bv, rho + delta), req).values[0]
    minus = smallest_interface_eig(make_context(bv, rho - delta), req).values[0]
    return float(plus - minus) / (2 * delta)


def convergence_factor(trace: NewtonTrace, oracle_tol: float = ORACLE_TOL) -> list[float | None]:
    """``eta_k = eps_{k+1} / eps_k^2``; None where either error is within 100x of the oracle accuracy."""
    eps = trace.eps()
    if eps is None:
        raise ValueError("convergence factors need a reference eigenvalue")
    floor = 1e2 * oracle_tol
    eta: list[float | None] = []
    for a, b in zip(eps[:-1], eps[1:]):
        if a < floor or b < floor or not math.isfinite(a) or not math.isfinite(b):
            eta.append(None)
        else:
            eta.append(b / a**2)
    return eta
