"""Mesh-size sweeps of the Newton iteration with CSV and text reporting."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .assembly import assemble, get_coefficient, write_coo
from .eigensolvers import EigRequest, coarse_rho0, reference_volume_eig
from .errors import ConfigurationError, NewtonSchurError
from .mesh import DomainSpec, build_mesh, write_mesh
from .newton import NewtonConfig, NewtonTrace, convergence_factor, run_newton
from .partition import blocks, coercivity_threshold, partition
from .schur import make_context, write_dense_coo

log = logging.getLogger(__name__)

TRACE_HEADER = ["domain", "dim", "H", "h", "k", "rho", "theta", "eps_rel", "eta", "wall_ms"]
SUMMARY_HEADER = [
    "kind", "domain", "dim", "H", "h", "lambda_h", "rho0", "eps0", "eta0",
    "steps", "converged", "alpha", "slope", "intercept", "residual", "error",
]  # fmt: skip

# Finest meshes run by default; 2D h = 2^-9 needs allow_fine.
MIN_H_3D = 2.0**-5
MIN_H_2D = 2.0**-8
MIN_H_2D_FINE = 2.0**-9


class Sweep(enum.Enum):
    FIXED_H = "fixed-H"  # coarse size fixed, fine size varies
    FIXED_h = "fixed-h"
    SINGLE = "single"

    @classmethod
    def parse(cls, name: "str | Sweep") -> "Sweep":
        if isinstance(name, cls):
            return name
        key = str(name).replace("_", "-")
        aliases = {
            "fixed-H": cls.FIXED_H, "FixedH-Varyh": cls.FIXED_H, "vary-h": cls.FIXED_H,
            "fixed-h": cls.FIXED_h, "Fixedh-VaryH": cls.FIXED_h, "vary-H": cls.FIXED_h,
            "single": cls.SINGLE, "Single": cls.SINGLE,
        }  # fmt: skip
        if key in aliases:
            return aliases[key]
        raise ConfigurationError(f"unknown sweep {name!r}")


def parse_size(text: str | float) -> float:
    """Accept ``0.125``, ``1/8`` or ``2^-3``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().replace(" ", "")
    m = re.fullmatch(r"2\^\(?(-?\d+)\)?", s) or re.fullmatch(r"2\*\*\(?(-?\d+)\)?", s)
    if m:
        return 2.0 ** int(m.group(1))
    try:
        return float(Fraction(s))
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"cannot parse mesh size {text!r}") from None


def parse_sizes(text: str | list) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [parse_size(t) for t in text]
    return [parse_size(t) for t in str(text).split(",") if t.strip()]


def fmt_size(x: float) -> str:
    j = -math.log2(x)
    return f"2^-{int(round(j))}" if abs(j - round(j)) < 1e-12 else repr(x)


@dataclass(frozen=True)
class ExperimentSpec:
    domain: DomainSpec
    sweep: Sweep
    H_values: tuple[float, ...]
    h_values: tuple[float, ...]
    coefficient: str = "laplace"
    seed: int = 0
    out: Path | None = None
    diagnostics: bool = False
    tol: float = 1e-12
    max_steps: int = 12
    cells_per_subdomain: int = 1
    allow_fine: bool = False
    dump_matrices: bool = False
    dump_mesh: bool = False
    dump_schur: bool = False
    timing: bool = True
    jobs: int = 1

    @classmethod
    def create(cls, domain, sweep, H_values, h_values, **kw) -> "ExperimentSpec":
        spec = cls(
            domain=DomainSpec.parse(domain),
            sweep=Sweep.parse(sweep),
            H_values=tuple(parse_sizes(H_values)),
            h_values=tuple(parse_sizes(h_values)),
            **kw,
        )
        spec.validate()
        return spec

    def configurations(self) -> list[tuple[float, float]]:
        if self.sweep is Sweep.FIXED_H:
            return [(self.H_values[0], h) for h in self.h_values]
        if self.sweep is Sweep.FIXED_h:
            return [(H, self.h_values[0]) for H in self.H_values]
        return [(self.H_values[0], self.h_values[0])]

    def validate(self) -> None:
        if not self.H_values or not self.h_values:
            raise ConfigurationError("H and h lists must be non-empty")
        if self.sweep is Sweep.FIXED_H and len(self.H_values) != 1:
            raise ConfigurationError("a fixed-H sweep takes exactly one H")
        if self.sweep is Sweep.FIXED_h and len(self.h_values) != 1:
            raise ConfigurationError("a fixed-h sweep takes exactly one h")
        if self.sweep is Sweep.SINGLE and (len(self.H_values) != 1 or len(self.h_values) != 1):
            raise ConfigurationError("a single run takes one H and one h")
        if not self.tol > 0 or self.max_steps < 1:
            raise ConfigurationError("tol must be positive and max_steps at least 1")
        get_coefficient(self.coefficient)
        floor = MIN_H_3D if self.domain.dim == 3 else (MIN_H_2D_FINE if self.allow_fine else MIN_H_2D)
        for H, h in self.configurations():
            if h < floor * (1 - 1e-12):
                raise ConfigurationError(f"h={h} is below the desk-scale limit {floor} for {self.domain.value}")
            # Cheap structural checks; the mesh itself is built later.
            for v, name in ((H, "H"), (h, "h")):
                j = -math.log2(v) if v > 0 else float("nan")
                if not (0 < v < 1) or abs(j - round(j)) > 1e-12:
                    raise ConfigurationError(f"{name}={v} must be a power of 1/2 below 1")
            if h > H:
                raise ConfigurationError(f"h={h} exceeds H={H}")
            width = self.cells_per_subdomain * H
            if width >= 1 and self.domain is not DomainSpec.L_SHAPE:
                raise ConfigurationError(f"subdomains of size {width} leave no interface")


@dataclass
class ConfigResult:
    domain: str
    dim: int
    H: float
    h: float
    lambda_h: float = float("nan")
    rho0: float = float("nan")
    trace: NewtonTrace | None = None
    eta: list = field(default_factory=list)
    alpha: float | None = None
    error: str | None = None
    seconds: float = 0.0

    @property
    def converged(self) -> bool:
        return self.error is None and self.trace is not None and self.trace.converged

    @property
    def eps(self) -> list[float]:
        return self.trace.eps() if self.trace else []

    @property
    def eta0(self) -> float | None:
        return self.eta[0] if self.eta else None


@dataclass
class Fit:
    variable: str
    slope: float
    intercept: float
    residual: float


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    results: list[ConfigResult]
    fits: list[Fit]

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.results)


def fit_slope(xs, ys) -> tuple[float, float, float]:
    """Least-squares fit ``log y = slope log x + intercept``; residual is the RMS log misfit."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 3:
        raise ValueError("need at least three points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fits need positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return float(slope), float(intercept), resid


def run_configuration(spec: ExperimentSpec, H: float, h: float) -> ConfigResult:
    res = ConfigResult(domain=spec.domain.value, dim=spec.domain.dim, H=H, h=h)
    t0 = time.perf_counter()
    try:
        coeff = get_coefficient(spec.coefficient)
        mesh = build_mesh(spec.domain, H, h)
        A, M, _ = assemble(mesh, coeff)
        part = partition(mesh, spec.cells_per_subdomain)
        bv = blocks(A, M, part)
        eig = EigRequest(tol=1e-12, seed=spec.seed)
        res.lambda_h = float(reference_volume_eig(A, M, EigRequest(tol=1e-13, seed=spec.seed)).values[0])
        res.rho0 = coarse_rho0(spec.domain, H, coeff)
        cfg = NewtonConfig(
            rho0=res.rho0,
            tol_err=spec.tol,
            max_steps=spec.max_steps,
            oracle_lambda=res.lambda_h,
            eig=eig,
            diag_gap=spec.diagnostics,
            diag_extension=spec.diagnostics,
            diag_derivative=spec.diagnostics,
        )
        res.trace = run_newton(bv, cfg)
        res.eta = convergence_factor(res.trace)
        if spec.diagnostics:
            res.alpha = coercivity_threshold(bv)
        if spec.out is not None:
            _dump_debug(spec, mesh, part, A, M, bv, res)
    except NewtonSchurError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        log.warning("configuration H=%s h=%s failed: %s", H, h, res.error)
    res.seconds = time.perf_counter() - t0
    return res


def _dump_debug(spec, mesh, part, A, M, bv, res) -> None:
    tag = f"{spec.domain.value}_H{fmt_size(mesh.H)}_h{fmt_size(mesh.h)}".replace("^", "")
    out = Path(spec.out)
    if spec.dump_mesh:
        write_mesh(mesh, out / f"{tag}.mesh.txt")
    if spec.dump_matrices:
        write_coo(A, out / f"{tag}.A.coo")
        write_coo(M, out / f"{tag}.M.coo")
    if spec.dump_schur and part.n_interface <= 2000:
        write_dense_coo(make_context(bv, res.rho0).dense(), out / f"{tag}.S_rho0.coo")


def _run_one(args):
    spec, H, h = args
    return run_configuration(spec, H, h)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    spec.validate()
    if spec.out is not None:
        Path(spec.out).mkdir(parents=True, exist_ok=True)
    configs = spec.configurations()
    if spec.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_run_one, [(spec, H, h) for H, h in configs]))
    else:
        results = [run_configuration(spec, H, h) for H, h in configs]

    fits = []
    if spec.sweep is not Sweep.SINGLE:
        variable = "H" if spec.sweep is Sweep.FIXED_h else "h"
        pts = [
            (getattr(r, variable), r.eta0)
            for r in results
            if r.converged and r.eta0 is not None and r.eta0 > 0
        ]
        if len(pts) >= 3:
            fits.append(Fit(variable, *fit_slope(*zip(*pts))))

    report = ExperimentReport(spec, results, fits)
    if spec.out is not None:
        out = Path(spec.out)
        (out / "trace.csv").write_text(trace_csv(report))
        (out / "summary.csv").write_text(summary_csv(report))
        (out / "report.txt").write_text(format_table(report))
        if spec.diagnostics:
            (out / "diagnostics.csv").write_text(diagnostics_csv(report))
    return report


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def trace_rows(report: ExperimentReport) -> list[dict]:
    rows = []
    for r in report.results:
        if r.trace is None:
            continue
        eps = r.eps
        thetas = r.trace.theta()
        for k, rho in enumerate(r.trace.rho):
            wall = r.trace.steps[k].wall_ms if k < len(r.trace.steps) and report.spec.timing else None
            rows.append(
                {
                    "domain": r.domain,
                    "dim": str(r.dim),
                    "H": _num(r.H),
                    "h": _num(r.h),
                    "k": str(k),
                    "rho": _num(rho),
                    "theta": _num(thetas[k]),
                    "eps_rel": _num(eps[k]),
                    "eta": _num(r.eta[k]) if k < len(r.eta) else "",
                    "wall_ms": "" if wall is None else f"{wall:.3f}",
                }
            )
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def trace_csv(report: ExperimentReport) -> str:
    return _csv(TRACE_HEADER, trace_rows(report))


def summary_csv(report: ExperimentReport) -> str:
    rows = []
    for r in report.results:
        eps = r.eps
        rows.append(
            {
                "kind": "config",
                "domain": r.domain,
                "dim": str(r.dim),
                "H": _num(r.H),
                "h": _num(r.h),
                "lambda_h": _num(r.lambda_h),
                "rho0": _num(r.rho0),
                "eps0": _num(eps[0]) if eps else "",
                "eta0": _num(r.eta0),
                "steps": str(r.trace.n_steps) if r.trace else "",
                "converged": str(r.converged).lower(),
                "alpha": _num(r.alpha),
                "error": r.error or "",
            }
        )
    for f in report.fits:
        rows.append(
            {
                "kind": f"fit_eta0_vs_{f.variable}",
                "domain": report.spec.domain.value,
                "dim": str(report.spec.domain.dim),
                "slope": _num(f.slope),
                "intercept": _num(f.intercept),
                "residual": _num(f.residual),
            }
        )
    return _csv(SUMMARY_HEADER, rows)


def diagnostics_csv(report: ExperimentReport) -> str:
    header = ["domain", "H", "h", "k", "rho", "theta", "dtheta", "dtheta_fd", "identity_dev",
              "ext_ratio", "gap", "theta2", "theta3"]  # fmt: skip
    rows = []
    for r in report.results:
        if r.trace is None:
            continue
        for s in r.trace.steps:
            gap = s.gap or (None, None, None)
            rows.append(
                {
                    "domain": r.domain, "H": _num(r.H), "h": _num(r.h), "k": str(s.k),
                    "rho": _num(s.rho), "theta": _num(s.theta), "dtheta": _num(s.dtheta),
                    "dtheta_fd": _num(s.dtheta_fd), "identity_dev": _num(s.identity_dev),
                    "ext_ratio": _num(s.ext_ratio),
                    "gap": _num(gap[1] - gap[0]) if s.gap else "",
                    "theta2": _num(gap[1]), "theta3": _num(gap[2]),
                }
            )  # fmt: skip
    return _csv(header, rows)


def _fmt_eps(e: float) -> str:
    return f"{e:.4f}" if abs(e) >= 1e-3 else f"{e:.4e}"


def format_table(report: ExperimentReport) -> str:
    """Error histories laid out like a convergence table; a check mark means already converged."""
    spec = report.spec
    variable = "H" if spec.sweep is Sweep.FIXED_h else "h"
    width = max((len(r.trace.rho) for r in report.results if r.trace), default=1)
    lines = [
        f"# {spec.domain.value} ({spec.domain.dim}D), sweep {spec.sweep.value}, relative errors eps_k",
        " | ".join([variable] + [f"eps_{k}" for k in range(width)]),
    ]
    for r in report.results:
        label = fmt_size(getattr(r, variable))
        if r.trace is None:
            lines.append(f"{label} | FAILED: {r.error}")
            continue
        cells = [_fmt_eps(e) for e in r.eps]
        cells += ["√"] * (width - len(cells)) if r.converged else ["-"] * (width - len(cells))
        lines.append(" | ".join([label] + cells))
    lines.append("")
    lines.append(" | ".join([variable, "eps_0", "eta_0", "steps", "converged"]))
    for r in report.results:
        eta0 = "" if r.eta0 is None else f"{r.eta0:.4e}"
        eps0 = _fmt_eps(r.eps[0]) if r.trace else ""
        steps = r.trace.n_steps if r.trace else ""
        lines.append(f"{fmt_size(getattr(r, variable))} | {eps0} | {eta0} | {steps} | {r.converged}")
    for f in report.fits:
        lines.append(f"fit log(eta_0) vs log({f.variable}): slope {f.slope:.4f}, residual {f.residual:.3e}")
    return "\n".join(lines) + "\n"

