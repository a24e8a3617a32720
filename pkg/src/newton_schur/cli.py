"""Command-line runner for Newton-Schur convergence experiments.

Settings come from an optional ``key=value`` file (``--config``) and are
overridden by command-line flags.  Keys match the long flag names, e.g.::

    domain = cube
    sweep = fixed-H
    H = 2^-1
    h = 2^-2, 2^-3, 2^-4
    out = results/cube
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError
from .experiments import ExperimentSpec, Sweep, format_table, parse_sizes, run_experiment
from .mesh import build_mesh
from .partition import partition

BOOL_KEYS = {"diagnostics", "dump_matrices", "dump_mesh", "dump_schur", "partition_stats", "allow_fine", "no_timing"}


def read_config(path: str | Path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="newton-schur", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--domain", help="square, cube or lshape")
    p.add_argument("--H", dest="H", help="coarse mesh size(s), comma separated (2^-2, 1/4, 0.25)")
    p.add_argument("--h", dest="h", help="fine mesh size(s), comma separated")
    p.add_argument("--sweep", help="fixed-H (vary h), fixed-h (vary H) or single; inferred when omitted")
    p.add_argument("--tol", type=float, help="stop once the relative error drops below this (default 1e-12)")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--coefficient", help="laplace (default), anisotropic or variable")
    p.add_argument("--seed", type=int)
    p.add_argument("--cells-per-subdomain", type=int, help="coarse cells per subdomain along each axis (default 1)")
    p.add_argument("--jobs", type=int, help="configurations run in parallel worker processes")
    p.add_argument("--out", help="directory for trace.csv, summary.csv and report.txt")
    p.add_argument("--diagnostics", action="store_true", default=None, help="derivative, gap and extension checks")
    p.add_argument("--dump-matrices", action="store_true", default=None, help="write A and M as coordinate text")
    p.add_argument("--dump-mesh", action="store_true", default=None, help="write the mesh as node/element text")
    p.add_argument("--dump-schur", action="store_true", default=None, help="write the dense S_rho0 (|Gamma| <= 2000)")
    p.add_argument("--partition-stats", action="store_true", default=None, help="print subdomain and interface sizes")
    p.add_argument("--allow-fine", action="store_true", default=None, help="permit 2D h = 2^-9")
    p.add_argument("--no-timing", action="store_true", default=None, help="leave wall_ms empty for reproducible CSV")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def spec_from_args(args: argparse.Namespace) -> tuple[ExperimentSpec, bool]:
    settings: dict = read_config(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "verbose") or value is None:
            continue
        settings[key] = value

    missing = [k for k in ("domain", "H", "h") if k not in settings]
    if missing:
        raise ConfigurationError(f"missing setting(s): {', '.join(missing)}")
    H_values = parse_sizes(settings["H"])
    h_values = parse_sizes(settings["h"])
    sweep = settings.get("sweep")
    if sweep is None:
        sweep = Sweep.FIXED_h if len(H_values) > 1 else Sweep.FIXED_H if len(h_values) > 1 else Sweep.SINGLE

    flags = {k: _truthy(settings.get(k, False)) for k in BOOL_KEYS}
    spec = ExperimentSpec.create(
        settings["domain"],
        sweep,
        H_values,
        h_values,
        coefficient=settings.get("coefficient", "laplace"),
        seed=int(settings.get("seed", 0)),
        out=Path(settings["out"]) if settings.get("out") else None,
        diagnostics=flags["diagnostics"],
        tol=float(settings.get("tol", 1e-12)),
        max_steps=int(settings.get("max_steps", 12)),
        cells_per_subdomain=int(settings.get("cells_per_subdomain", 1)),
        allow_fine=flags["allow_fine"],
        dump_matrices=flags["dump_matrices"],
        dump_mesh=flags["dump_mesh"],
        dump_schur=flags["dump_schur"],
        timing=not flags["no_timing"],
        jobs=int(settings.get("jobs", 1)),
    )
    return spec, flags["partition_stats"]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec, stats = spec_from_args(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if stats:
        for H, h in spec.configurations():
            part = partition(build_mesh(spec.domain, H, h), spec.cells_per_subdomain)
            print(json.dumps({"H": H, "h": h, **part.stats()}))

    report = run_experiment(spec)

    print(format_table(report), end="")
    if spec.out is not None:
        print(f"wrote {spec.out}/trace.csv, summary.csv, report.txt")
    return 0 if report.all_converged else 1


if __name__ == "__main__":
    sys.exit(main())
