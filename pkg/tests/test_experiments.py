import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newton_schur.errors import ConfigurationError
from newton_schur.experiments import (
    SUMMARY_HEADER,
    TRACE_HEADER,
    ExperimentSpec,
    Sweep,
    fit_slope,
    fmt_size,
    format_table,
    parse_size,
    parse_sizes,
    run_configuration,
    run_experiment,
    summary_csv,
    trace_csv,
)


def test_fit_slope_exact_power_law():
    xs = [0.5, 0.25, 0.125, 0.0625]
    slope, intercept, resid = fit_slope(xs, [x**2 for x in xs])
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert intercept == pytest.approx(0.0, abs=1e-12)
    assert resid < 1e-12
    assert fit_slope(xs, [3.0] * 4)[0] == pytest.approx(0.0, abs=1e-12)


def test_fit_slope_reference_values():
    # eta_0 = eps_1 / eps_0^2 from a reference L-shape H-sweep.
    eta = [0.1086, 0.0253, 6.15e-3, 1.47e-3, 3.67e-4]
    H = [2.0**-j for j in range(2, 7)]
    assert fit_slope(H, eta)[0] == pytest.approx(2.05, abs=0.01)


@pytest.mark.parametrize("xs,ys", [([1, 2], [1, 2]), ([1, 2, 3], [1, 0, 2]), ([1, -2, 3], [1, 2, 3])])
def test_fit_slope_rejects(xs, ys):
    with pytest.raises(ValueError):
        fit_slope(xs, ys)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-4, 4), c=st.floats(1e-3, 1e3), n=st.integers(3, 8))
def test_property_fit_recovers_exponent(p, c, n):
    xs = 2.0 ** -np.arange(1, n + 1)
    slope, _, resid = fit_slope(xs, c * xs**p)
    assert slope == pytest.approx(p, abs=1e-9)
    assert resid < 1e-9


@pytest.mark.parametrize("text,value", [("2^-3", 0.125), ("1/8", 0.125), ("0.125", 0.125), ("2**-2", 0.25)])
def test_parse_size(text, value):
    assert parse_size(text) == value


def test_parse_sizes_and_format():
    assert parse_sizes("2^-1, 1/4,0.125") == [0.5, 0.25, 0.125]
    assert fmt_size(0.0625) == "2^-4"
    with pytest.raises(ConfigurationError):
        parse_size("tiny")


@pytest.mark.parametrize(
    "kw",
    [
        dict(H_values=[], h_values=[0.25]),
        dict(H_values=[0.5], h_values=[]),
        dict(H_values=[0.5, 0.25], h_values=[0.125, 0.0625], sweep="fixed-H"),
        dict(H_values=[0.5], h_values=[1.0 / 64]),  # below the 3D desk limit
        dict(H_values=[0.3], h_values=[0.125]),
        dict(H_values=[0.125], h_values=[0.25]),
        dict(H_values=[0.5], h_values=[0.25], coefficient="spiral"),
        dict(H_values=[0.5], h_values=[0.25], tol=0.0),
    ],
)
def test_spec_validation(kw):
    args = dict(domain="cube", sweep="single", H_values=[0.5], h_values=[0.25])
    args.update(kw)
    if len(args["h_values"]) > 1 and "sweep" not in kw:
        args["sweep"] = "fixed-H"
    with pytest.raises(ConfigurationError):
        ExperimentSpec.create(args.pop("domain"), args.pop("sweep"), args.pop("H_values"), args.pop("h_values"), **args)


def test_desk_limits_2d():
    ExperimentSpec.create("square", "single", [0.5], [2.0**-8])
    with pytest.raises(ConfigurationError):
        ExperimentSpec.create("square", "single", [0.5], [2.0**-9])
    ExperimentSpec.create("square", "single", [0.5], [2.0**-9], allow_fine=True)


def test_configurations():
    spec = ExperimentSpec.create("lshape", Sweep.FIXED_h, [0.25, 0.125], [1 / 32])
    assert spec.configurations() == [(0.25, 1 / 32), (0.125, 1 / 32)]
    spec = ExperimentSpec.create("cube", "fixed-H", [0.5], [0.25, 0.125])
    assert spec.configurations() == [(0.5, 0.25), (0.5, 0.125)]


@pytest.fixture(scope="module")
def cube_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("cube")
    spec = ExperimentSpec.create("cube", "fixed-H", [0.5], [0.25, 0.125, 1 / 16], out=out, timing=False)
    return run_experiment(spec), out


def test_trace_csv_schema(cube_report):
    report, out = cube_report
    text = (out / "trace.csv").read_text()
    assert text.splitlines()[0] == "domain,dim,H,h,k,rho,theta,eps_rel,eta,wall_ms"
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == TRACE_HEADER
    for r in report.results:
        mine = [row for row in rows if float(row["h"]) == r.h]
        assert [int(row["k"]) for row in mine] == list(range(len(r.trace.rho)))
        assert mine[-1]["eta"] == "" and mine[-1]["theta"] == ""
        assert all(row["wall_ms"] == "" for row in mine)
        np.testing.assert_array_equal([float(row["rho"]) for row in mine], r.trace.rho)


def test_summary_csv(cube_report):
    report, out = cube_report
    rows = list(csv.DictReader(io.StringIO((out / "summary.csv").read_text())))
    assert list(rows[0]) == SUMMARY_HEADER
    configs = [r for r in rows if r["kind"] == "config"]
    assert len(configs) == 3 and all(r["converged"] == "true" for r in configs)
    fit = [r for r in rows if r["kind"] == "fit_eta0_vs_h"]
    assert len(fit) == 1 and float(fit[0]["slope"]) < 0


def test_table_rows_backed_by_csv(cube_report):
    report, out = cube_report
    table = (out / "report.txt").read_text().splitlines()
    rows = list(csv.DictReader(io.StringIO((out / "trace.csv").read_text())))
    header = table[1].split(" | ")
    assert header[0] == "h"
    for line in table[2:5]:
        cells = line.split(" | ")
        h = parse_size(cells[0])
        mine = [row for row in rows if float(row["h"]) == h]
        shown = [c for c in cells[1:] if c != "√"]
        assert len(shown) == len(mine)
        for c, row in zip(shown, mine):
            eps = float(row["eps_rel"])
            assert abs(float(c) - eps) <= max(5e-5, 1e-3 * abs(eps))
        assert set(cells[1 + len(shown) :]) <= {"√"}


def test_csv_deterministic(cube_report):
    report, _ = cube_report
    again = run_experiment(report.spec.__class__(**{**report.spec.__dict__, "out": None}))
    assert trace_csv(again) == trace_csv(report)
    assert summary_csv(again) == summary_csv(report)


def test_parallel_jobs_same_output(cube_report):
    report, _ = cube_report
    spec = report.spec.__class__(**{**report.spec.__dict__, "out": None, "jobs": 2})
    assert trace_csv(run_experiment(spec)) == trace_csv(report)


def test_failed_configuration_is_reported():
    spec = ExperimentSpec.create("cube", "single", [0.5], [0.125], max_steps=1, tol=1e-12)
    report = run_experiment(spec)
    assert not report.all_converged
    lines = format_table(report).splitlines()
    assert "√" not in lines[2]
    assert lines[-1].endswith("| False")


def test_diagnostics_file(tmp_path):
    spec = ExperimentSpec.create("square", "fixed-h", [0.5, 0.25, 0.125], [1 / 16], out=tmp_path, diagnostics=True)
    report = run_experiment(spec)
    assert report.all_converged
    rows = list(csv.DictReader(io.StringIO((tmp_path / "diagnostics.csv").read_text())))
    assert rows and all(float(r["gap"]) > 0 for r in rows if r["gap"])
    for r in rows:
        assert abs(float(r["dtheta_fd"]) - float(r["dtheta"])) <= 1e-4 * abs(float(r["dtheta"]))
    assert all(res.alpha > res.rho0 for res in report.results)


def test_run_configuration_records_errors():
    spec = ExperimentSpec.create("square", "single", [0.25], [0.0625])
    res = run_configuration(spec, 0.25, 0.0625)
    assert res.converged and res.error is None
    assert res.eps[0] > 0 and res.eta0 > 0
