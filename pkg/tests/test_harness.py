import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncrflow import harness
from ncrflow.harness import (CSV_HEADER, ConvergenceReport, LevelResult, fit_eoc, pairwise_eoc, read_csv,
                             run_convergence, run_viscosity_sweep, write_csv)

H = np.array([0.1, 0.05, 0.025, 0.0125])
# tabulated no-flow velocity errors of the MPFA scheme
MPS_U = np.array([1.59e-4, 1.78e-5, 2.10e-6, 3.91e-7])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(1.0, 10.0))
def test_eoc_of_power_law_is_exact(order, const):
    errs = const * H ** order
    assert fit_eoc(errs, H) == pytest.approx(order, abs=1e-12)
    for e in pairwise_eoc(errs, H):
        assert e == pytest.approx(order, abs=1e-12)


def test_second_order_errors_give_two():
    assert fit_eoc(H ** 2, H) == pytest.approx(2.0, abs=1e-12)


def test_tabulated_values_give_tabulated_order():
    assert fit_eoc(MPS_U, H) == pytest.approx(2.89, abs=0.03)


def test_single_level_has_no_eoc():
    assert fit_eoc([1e-3], [0.1]) is None
    assert pairwise_eoc([1e-3], [0.1]) == []


def test_errors_below_floor_are_suppressed():
    errs = [1e-3, 1e-12, 1e-13]
    hs = [0.1, 0.05, 0.025]
    assert fit_eoc(errs, hs) is None
    assert pairwise_eoc(errs, hs) == [None, None]


def _row(n, err_u, err_p, scheme="crp0"):
    return LevelResult(scheme, "noflow-sin", 1.0, n, 1.0 / n, 2 * n * n, err_u, err_p, 0.0)


def test_report_sorts_levels_and_fills_eoc():
    rows = [_row(20, 0.25e-2, 0.5e-1), _row(10, 1e-2, 1e-1), _row(40, 0.0625e-2, 0.25e-1)]
    rep = ConvergenceReport(rows)
    assert [r.n for r in rep.rows] == [10, 20, 40]
    assert rep.rows[0].eoc_u is None
    assert rep.rows[1].eoc_u == pytest.approx(2.0)
    assert rep.rows[2].eoc_p == pytest.approx(1.0)
    assert rep.slope_u == pytest.approx(2.0)
    assert "fitted slopes" in rep.summary()


def test_csv_round_trip(tmp_path):
    rep = ConvergenceReport([_row(10, 1.0 / 3.0, np.pi), _row(20, 1e-300, 2.0 / 7.0)])
    path = tmp_path / "r.csv"
    write_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    back = read_csv(path)
    for a, b in zip(rep.rows, back):
        assert (a.scheme, a.case, a.n, a.ncells) == (b.scheme, b.case, b.n, b.ncells)
        assert a.err_u == b.err_u and a.err_p == b.err_p and a.h == b.h
        assert a.eoc_u == b.eoc_u


def test_read_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_tipping_point():
    rows = [LevelResult("crp0", "c", nu, 10, 0.1, 200, e, 0.0)
            for nu, e in [(1.0, 1.0), (0.1, 1.2), (0.01, 3.0), (0.001, 30.0)]]
    assert harness._tipping_point(rows) == 0.01
    flat = [LevelResult("trio", "c", nu, 10, 0.1, 200, 1.0, 0.0) for nu in (1.0, 0.1)]
    assert harness._tipping_point(flat) is None


def test_deterministic_csv_is_identical(tmp_path):
    paths = []
    for k in range(2):
        rep = run_convergence("mps", "noflow-sin", 1.0, [4, 8], deterministic=True)
        p = tmp_path / f"run{k}.csv"
        write_csv(rep, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert all(r.wall_ms == 0.0 for r in read_csv(paths[0]))


def test_parallel_and_serial_runs_agree(monkeypatch):
    monkeypatch.setenv("NCR_THREADS", "2")
    par = run_convergence("crp0", "sin-sin", 1.0, [4, 8])
    ser = run_convergence("crp0", "sin-sin", 1.0, [4, 8], deterministic=True)
    np.testing.assert_array_equal(par.errors_u, ser.errors_u)
    np.testing.assert_array_equal(par.errors_p, ser.errors_p)


def test_worker_count_respects_cap(monkeypatch):
    monkeypatch.setenv("NCR_THREADS", "1")
    assert harness.worker_count(8) == 1
    monkeypatch.delenv("NCR_THREADS")
    assert harness.worker_count(3) == 3


def test_levels_must_ascend():
    with pytest.raises(ValueError):
        run_convergence("crp0", "sin-sin", 1.0, [8, 4])


def test_failure_attaches_completed_levels(monkeypatch):
    real = harness.solve_level

    def flaky(scheme, case, nu, n, **kw):
        if n == 8:
            raise RuntimeError("boom")
        return real(scheme, case, nu, n, **kw)

    monkeypatch.setattr(harness, "solve_level", flaky)
    with pytest.raises(RuntimeError) as info:
        run_convergence("crp0", "sin-sin", 1.0, [4, 8], deterministic=True)
    assert [r.n for r in info.value.partial.rows] == [4]


def test_viscosity_sweep_orders_rows_and_detects_growth():
    sweep = run_viscosity_sweep(["crp0", "trio"], "sin-affine", [1.0, 1e-3, 1e-1], 4, deterministic=True)
    assert [r.nu for r in sweep.rows[:3]] == [1.0, 0.1, 1e-3]
    assert sweep.tipping["trio"] is None
    assert sweep.tipping["crp0"] is not None
    trio = sweep.errors("trio")
    assert np.ptp(trio) / trio[0] < 1e-3


def test_solve_level_reports_transient_extras():
    row = harness.solve_level("crp0", "green-taylor", 1.0, 4, t_max=0.01, deterministic=True)
    assert row.extra["nsteps"] >= 1
    assert row.extra["max_divergence"] <= 1e-9
    assert row.wall_ms == 0.0
