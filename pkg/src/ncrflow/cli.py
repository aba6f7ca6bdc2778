"""Command-line front end.

Exit codes: 0 on success, 1 on usage errors, 2 on numerical or mesh failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from . import harness
from .cases import CaseDefinitionError, case_names, get_case
from .linalg import SolverError
from .mesh import MeshError, read_mesh, validate, write_mesh
from .stokes import SchemeKind

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class CliConfig:
    subcommand: str
    scheme: str | None = None
    case: str | None = None
    nu: float = 1.0
    levels: tuple = ()
    n: int | None = None
    mode: str = "alternating"
    distortion: float = 0.0
    mesh_path: str | None = None
    t_max: float = 0.01
    cfl: float = 0.5
    out: str | None = None
    deterministic: bool = False
    lumped: bool = False

    def __post_init__(self):
        if self.nu <= 0:
            raise UsageError("--nu must be positive")
        if self.t_max < 0:
            raise UsageError("--t-max must be non-negative")
        if self.n is not None and self.mesh_path is not None:
            raise UsageError("--n and --mesh are mutually exclusive")


def _levels(text: str) -> tuple:
    try:
        levels = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}") from None
    if not levels or any(n < 1 for n in levels):
        raise argparse.ArgumentTypeError("levels must be positive")
    return levels


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _scheme(text: str) -> str:
    try:
        return SchemeKind.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_mesh_args(p, single=True):
    if single:
        p.add_argument("--n", type=int, help="cells per side of a generated mesh")
        p.add_argument("--mesh", dest="mesh_path", help="read the mesh from a file instead")
    p.add_argument("--mode", choices=["alternating", "uniform"], default="alternating",
                   help="diagonal pattern of generated meshes")
    p.add_argument("--distortion", type=float, default=0.0, help="Kershaw distortion in [0, 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ncrflow", description="Nonconforming Stokes and Navier-Stokes solvers")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    mesh = sub.add_parser("mesh", help="generate or check meshes")
    msub = mesh.add_subparsers(dest="action", parser_class=_Parser)
    msub.required = True
    gen = msub.add_parser("gen", help="write a structured or Kershaw mesh")
    gen.add_argument("--n", type=int, required=True)
    _add_mesh_args(gen, single=False)
    gen.add_argument("--out", required=True)
    chk = msub.add_parser("check", help="validate a mesh file")
    chk.add_argument("path")

    cases = ", ".join(case_names())
    for name, helptext in [("stokes", "solve one steady Stokes problem"),
                           ("ns", "run the transient projection scheme")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scheme", type=_scheme, required=True, help="crp0, trio or mps")
        p.add_argument("--case", required=True, help=f"one of {cases}")
        p.add_argument("--nu", type=float, default=1.0)
        _add_mesh_args(p)
        if name == "ns":
            p.add_argument("--t-max", type=float, default=0.01)
            p.add_argument("--cfl", type=float, default=0.5)
            p.add_argument("--lumped", action="store_true", help="lumped mass in the pressure step")

    conv = sub.add_parser("convergence", help="errors and EOC over mesh levels")
    conv.add_argument("--scheme", type=_scheme, required=True)
    conv.add_argument("--case", required=True, help=f"one of {cases}")
    conv.add_argument("--nu", type=float, default=1.0)
    conv.add_argument("--levels", type=_levels, default=(10, 20, 40, 80))
    _add_mesh_args(conv, single=False)
    conv.add_argument("--t-max", type=float, default=0.01)
    conv.add_argument("--cfl", type=float, default=0.5)
    conv.add_argument("--lumped", action="store_true")
    conv.add_argument("--out")
    conv.add_argument("--deterministic", action="store_true", help="serial run, wall_ms written as 0")

    visc = sub.add_parser("visc-sweep", help="errors over viscosities on one mesh")
    visc.add_argument("--schemes", default="crp0,trio,mps")
    visc.add_argument("--case", required=True, help=f"one of {cases}")
    visc.add_argument("--nus", type=_floats, default=(1.0, 1e-1, 1e-2, 1e-3))
    visc.add_argument("--n", type=int, default=10)
    _add_mesh_args(visc, single=False)
    visc.add_argument("--out")
    visc.add_argument("--deterministic", action="store_true")
    return parser


def _case(name):
    try:
        return get_case(name)
    except KeyError:
        raise UsageError(f"unknown case {name!r}; expected one of {', '.join(case_names())}") from None


def _mesh(args):
    if getattr(args, "mesh_path", None):
        return read_mesh(args.mesh_path)
    n = args.n if args.n is not None else 10
    if n < 1:
        raise UsageError("--n must be positive")
    return harness.make_mesh(n, args.distortion, args.mode)


def _cmd_mesh(args) -> int:
    if args.action == "gen":
        if args.n < 1:
            raise UsageError("--n must be positive")
        tri = harness.make_mesh(args.n, args.distortion, args.mode)
        write_mesh(tri, args.out)
        print(f"wrote {args.out}: {tri.nvertices} vertices, {tri.ncells} cells")
        return EXIT_OK
    report = validate(read_mesh(args.path))
    print(report.summary())
    return EXIT_OK if report.structural_ok else EXIT_NUMERIC


def _cmd_single(args) -> int:
    CliConfig(args.subcommand, args.scheme, args.case, args.nu, n=args.n, mesh_path=args.mesh_path,
              t_max=getattr(args, "t_max", 0.01))
    case = _case(args.case)
    tri = _mesh(args)
    if args.subcommand == "ns" and not case.time_dependent:
        raise UsageError(f"case {case.name!r} is steady; use 'stokes'")
    row = harness.solve_level(args.scheme, case, args.nu, args.n or 0, tri=tri,
                              t_max=getattr(args, "t_max", None), cfl=getattr(args, "cfl", 0.5),
                              lumped=getattr(args, "lumped", False))
    print(f"scheme {row.scheme}  case {row.case}  nu {row.nu:g}  cells {row.ncells}  h {row.h:.4g}")
    print(f"err_u {row.err_u:.6e}")
    print(f"err_p {row.err_p:.6e}")
    for key in ("dt", "nsteps", "max_divergence"):
        if key in row.extra:
            print(f"{key} {row.extra[key]:.6g}")
    return EXIT_OK


def _cmd_convergence(args) -> int:
    CliConfig("convergence", args.scheme, args.case, args.nu, levels=args.levels, t_max=args.t_max)
    case = _case(args.case)
    try:
        report = harness.run_convergence(args.scheme, case.name, args.nu, args.levels,
                                         distortion=args.distortion, mode=args.mode,
                                         t_max=args.t_max, cfl=args.cfl, lumped=args.lumped,
                                         deterministic=args.deterministic)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(report.summary())
    if args.out:
        harness.write_csv(report, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_visc(args) -> int:
    case = _case(args.case)
    schemes = [_scheme(s) for s in args.schemes.split(",") if s.strip()]
    if any(nu <= 0 for nu in args.nus):
        raise UsageError("viscosities must be positive")
    sweep = harness.run_viscosity_sweep(schemes, case, args.nus, args.n, args.distortion, args.mode,
                                        deterministic=args.deterministic)
    for scheme in schemes:
        errs = sweep.errors(scheme)
        nus = sorted(args.nus, reverse=True)
        cells = "  ".join(f"nu={nu:g}: {e:.4e}" for nu, e in zip(nus, errs))
        tip = sweep.tipping[scheme]
        print(f"{scheme:>5}  {cells}  tipping: {'none' if tip is None else f'{tip:g}'}")
    if args.out:
        harness.write_csv(sweep, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"mesh": _cmd_mesh, "stokes": _cmd_single, "ns": _cmd_single,
                   "convergence": _cmd_convergence, "visc-sweep": _cmd_visc}[args.subcommand]
        return handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (SolverError, MeshError, CaseDefinitionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
