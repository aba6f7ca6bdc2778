"""Convergence studies, viscosity sweeps and CSV reports.

Errors follow the relative L2 convention: ``||u_h||`` when the exact
velocity vanishes, ``||u_h - u|| / ||u||`` otherwise, and
``||p_h - p|| / ||p||`` for the pressure.  The pressure field of each scheme
is the one it defines: cell values for CR-P0, cell plus vertex values for
the enriched scheme and, for the MPFA scheme, the piecewise-affine field
``q_l + G_i . (x - x_l)`` on every quadrangle.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fem, mpfa
from .cases import ManufacturedCase, get_case
from .mesh import Triangulation, generate_kershaw, generate_structured
from .navier_stokes import run_transient
from .stokes import SchemeKind, SchemeOperators, StokesSolution, solve_stokes

__all__ = [
    "CSV_HEADER",
    "EOC_FLOOR",
    "LevelResult",
    "ConvergenceReport",
    "ViscositySweep",
    "make_mesh",
    "velocity_error",
    "pressure_error",
    "pairwise_eoc",
    "fit_eoc",
    "solve_level",
    "run_convergence",
    "run_viscosity_sweep",
    "write_csv",
    "read_csv",
    "worker_count",
]

CSV_HEADER = ["scheme", "case", "nu", "n", "h", "ncells", "err_u", "err_p", "eoc_u", "eoc_p", "wall_ms"]
EOC_FLOOR = 1e-9


def make_mesh(n: int, distortion: float = 0.0, mode: str = "alternating") -> Triangulation:
    """Structured ``n x n`` mesh of the unit square, Kershaw-distorted if asked."""
    if distortion:
        return generate_kershaw(n, distortion, mode)
    return generate_structured(n, mode)


def velocity_error(sol: StokesSolution, case: ManufacturedCase, t: float = 0.0) -> float:
    err = fem.l2_error(sol.tri, sol.velocity.values, sol.velocity.layout, case.velocity_fn(t))
    if case.zero_velocity:
        return err
    return err / case.velocity_norm(t)


def pressure_error(sol: StokesSolution, case: ManufacturedCase, t: float = 0.0,
                   operators: SchemeOperators | None = None) -> float:
    exact = case.pressure_fn(t)
    if sol.scheme is SchemeKind.MPS:
        ops = operators or SchemeOperators(sol.tri)
        flux = sol.boundary_flux
        f = None if flux is not None else case.forcing_fn(sol.nu, t)
        err = mpfa.reconstructed_l2_error(sol.tri, sol.pressure.values, exact, f=f, flux=flux,
                                          operator=ops.mpfa)
    else:
        err = fem.l2_error(sol.tri, sol.pressure.values, sol.pressure.layout, exact)
    return err / case.pressure_norm(t)


def pairwise_eoc(errors, hs) -> list:
    """``log(e1/e2) / log(h1/h2)`` between consecutive levels; ``None`` below the floor."""
    out = []
    for (e1, h1), (e2, h2) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        if min(e1, e2) < EOC_FLOOR:
            out.append(None)
        else:
            out.append(math.log(e1 / e2) / math.log(h1 / h2))
    return out


def fit_eoc(errors, hs):
    """Least-squares slope of ``log e`` against ``log h``; ``None`` if undefined."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) < 2 or np.any(errors < EOC_FLOOR):
        return None
    x = np.log(hs)
    y = np.log(errors)
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


@dataclass
class LevelResult:
    scheme: str
    case: str
    nu: float
    n: int
    h: float
    ncells: int
    err_u: float
    err_p: float
    wall_ms: float = 0.0
    eoc_u: float | None = None
    eoc_p: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    rows: list

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: -r.h)
        hs = [r.h for r in self.rows]
        eu = pairwise_eoc([r.err_u for r in self.rows], hs)
        ep = pairwise_eoc([r.err_p for r in self.rows], hs)
        for row, a, b in zip(self.rows[1:], eu, ep):
            row.eoc_u, row.eoc_p = a, b

    @property
    def hs(self):
        return np.array([r.h for r in self.rows])

    @property
    def errors_u(self):
        return np.array([r.err_u for r in self.rows])

    @property
    def errors_p(self):
        return np.array([r.err_p for r in self.rows])

    @property
    def slope_u(self):
        return fit_eoc(self.errors_u, self.hs)

    @property
    def slope_p(self):
        return fit_eoc(self.errors_p, self.hs)

    def summary(self) -> str:
        lines = [f"{'n':>5} {'h':>10} {'err_u':>12} {'eoc_u':>7} {'err_p':>12} {'eoc_p':>7}"]
        for r in self.rows:
            eu = "" if r.eoc_u is None else f"{r.eoc_u:.3f}"
            ep = "" if r.eoc_p is None else f"{r.eoc_p:.3f}"
            lines.append(f"{r.n:>5} {r.h:>10.4g} {r.err_u:>12.4e} {eu:>7} {r.err_p:>12.4e} {ep:>7}")
        su = "n/a" if self.slope_u is None else f"{self.slope_u:.3f}"
        sp_ = "n/a" if self.slope_p is None else f"{self.slope_p:.3f}"
        lines.append(f"fitted slopes: u {su}, p {sp_}")
        return "\n".join(lines)


def solve_level(scheme, case, nu: float, n: int, distortion: float = 0.0, mode: str = "alternating",
                t_max: float | None = None, cfl: float = 0.5, lumped: bool = False,
                operators: SchemeOperators | None = None, tri: Triangulation | None = None,
                deterministic: bool = False) -> LevelResult:
    """Solve one mesh level and measure the errors.

    Time-dependent cases run the projection scheme up to ``t_max``.
    """
    scheme = SchemeKind.parse(scheme)
    case = get_case(case) if isinstance(case, str) else case
    tri = make_mesh(n, distortion, mode) if tri is None else tri
    ops = operators or SchemeOperators(tri)
    start = time.perf_counter()
    extra = {}
    if case.time_dependent:
        t_final = 0.01 if t_max is None else t_max
        sol, rep = run_transient(tri, scheme, nu, case, t_final, cfl, lumped=lumped, operators=ops)
        extra = {"dt": rep.dt, "nsteps": rep.nsteps,
                 "max_divergence": max(rep.max_divergence, default=0.0),
                 "kinetic_energy": rep.kinetic_energy}
        t_eval = t_final
    else:
        sol = solve_stokes(tri, scheme, nu, case, operators=ops)
        t_eval = 0.0
    err_u = velocity_error(sol, case, t_eval)
    err_p = pressure_error(sol, case, t_eval, ops)
    wall = 0.0 if deterministic else 1e3 * (time.perf_counter() - start)
    return LevelResult(scheme.value, case.name, float(nu), int(n), float(tri.h), tri.ncells,
                       float(err_u), float(err_p), wall, extra=extra)


def worker_count(requested: int | None = None) -> int:
    """Worker processes: ``requested`` or the CPU count, capped by ``NCR_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("NCR_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _solve_level_args(args):
    return solve_level(*args[0], **args[1])


def run_convergence(scheme, case, nu: float, levels, distortion: float = 0.0, mode: str = "alternating",
                    t_max: float | None = None, cfl: float = 0.5, lumped: bool = False,
                    deterministic: bool = False, workers: int | None = None) -> ConvergenceReport:
    """Errors and EOC over a list of mesh levels.

    Levels run in worker processes unless ``deterministic`` (which also
    records ``wall_ms = 0`` so repeated reports are identical).  On failure
    the completed levels are attached to the exception as ``partial``.
    """
    levels = [int(n) for n in levels]
    if levels != sorted(levels):
        raise ValueError("levels must be ascending")
    kw = dict(distortion=distortion, mode=mode, t_max=t_max, cfl=cfl, lumped=lumped,
              deterministic=deterministic)
    jobs = [((scheme, case, nu, n), kw) for n in levels]
    rows = []
    nworkers = 1 if deterministic else min(worker_count(workers), len(levels))
    try:
        if nworkers > 1 and not isinstance(case, ManufacturedCase):
            with ProcessPoolExecutor(max_workers=nworkers) as pool:
                for row in pool.map(_solve_level_args, jobs):
                    rows.append(row)
        else:
            for job in jobs:
                rows.append(_solve_level_args(job))
    except Exception as exc:
        exc.partial = ConvergenceReport(rows)
        raise
    return ConvergenceReport(rows)


@dataclass
class ViscositySweep:
    rows: list
    tipping: dict

    def errors(self, scheme) -> np.ndarray:
        key = SchemeKind.parse(scheme).value
        return np.array([r.err_u for r in self.rows if r.scheme == key])


def _tipping_point(rows):
    """Largest-first scan: the first ``nu`` whose error doubles the reference."""
    ordered = sorted(rows, key=lambda r: -r.nu)
    ref = ordered[0].err_u
    for r in ordered[1:]:
        if r.err_u >= 2.0 * ref:
            return r.nu
    return None


def run_viscosity_sweep(schemes, case, nus, n: int, distortion: float = 0.0,
                        mode: str = "alternating", deterministic: bool = False) -> ViscositySweep:
    """Errors on one mesh over several viscosities, with the tipping point
    below which the velocity error grows like ``1 / nu``."""
    case = get_case(case) if isinstance(case, str) else case
    tri = make_mesh(n, distortion, mode)
    ops = SchemeOperators(tri)
    rows, tipping = [], {}
    for scheme in schemes:
        scheme = SchemeKind.parse(scheme)
        block = [solve_level(scheme, case, nu, n, operators=ops, tri=tri, deterministic=deterministic)
                 for nu in sorted(nus, reverse=True)]
        tipping[scheme.value] = _tipping_point(block)
        rows.extend(block)
    return ViscositySweep(rows, tipping)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(report, path) -> None:
    """Write report rows with the fixed header and 17-digit decimals."""
    rows = report.rows if hasattr(report, "rows") else report
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.scheme, r.case, _fmt(r.nu), _fmt(r.n), _fmt(r.h), _fmt(r.ncells),
                        _fmt(r.err_u), _fmt(r.err_p), _fmt(r.eoc_u), _fmt(r.eoc_p), _fmt(r.wall_ms)])


def read_csv(path) -> list:
    """Parse a report written by :func:`write_csv` back into ``LevelResult`` rows."""
    def opt(s):
        return None if s == "" else float(s)

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        out = []
        for rec in reader:
            d = dict(zip(CSV_HEADER, rec))
            out.append(LevelResult(d["scheme"], d["case"], float(d["nu"]), int(d["n"]), float(d["h"]),
                                   int(d["ncells"]), float(d["err_u"]), float(d["err_p"]),
                                   float(d["wall_ms"]), opt(d["eoc_u"]), opt(d["eoc_p"])))
    return out
