"""Manufactured solutions on the unit square.

Each case provides hand-coded closed forms of ``u``, ``grad u``, ``lap u``,
``du/dt``, ``p`` and ``grad p``; the forcing is composed from them.  At
registration the derivatives are checked against fourth-order finite
differences, ``div u = 0`` and ``int p = 0`` are verified, and a failing
case aborts with its name.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "CaseDefinitionError",
    "ManufacturedCase",
    "register_builtin_cases",
    "get_case",
    "case_names",
    "square_integral",
]

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi


class CaseDefinitionError(ValueError):
    pass


def _z(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def _c(value, x, y):
    return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(value))


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact Stokes or Navier-Stokes solution with its derivatives.

    All callables take ``(x, y, t)``; vector results are pairs, the
    velocity gradient is ``((dux/dx, dux/dy), (duy/dx, duy/dy))``.
    """

    name: str
    description: str
    velocity: Callable
    velocity_gradient: Callable
    velocity_laplacian: Callable
    velocity_dt: Callable
    pressure: Callable
    pressure_gradient: Callable
    zero_velocity: bool = False
    time_dependent: bool = False
    navier_stokes: bool = False

    def forcing(self, x, y, t=0.0, nu=1.0, navier_stokes=None):
        """``-nu lap u + grad p``, plus ``du/dt + (u . grad) u`` for Navier-Stokes."""
        ns = self.navier_stokes if navier_stokes is None else navier_stokes
        lap = self.velocity_laplacian(x, y, t)
        gp = self.pressure_gradient(x, y, t)
        fx = -nu * lap[0] + gp[0]
        fy = -nu * lap[1] + gp[1]
        if ns:
            u = self.velocity(x, y, t)
            g = self.velocity_gradient(x, y, t)
            dt = self.velocity_dt(x, y, t)
            fx = fx + dt[0] + u[0] * g[0][0] + u[1] * g[0][1]
            fy = fy + dt[1] + u[0] * g[1][0] + u[1] * g[1][1]
        return np.asarray(fx), np.asarray(fy)

    def forcing_fn(self, nu=1.0, t=0.0, navier_stokes=None):
        return lambda x, y: self.forcing(x, y, t, nu, navier_stokes)

    def velocity_fn(self, t=0.0):
        return lambda x, y: self.velocity(x, y, t)

    def pressure_fn(self, t=0.0):
        return lambda x, y: self.pressure(x, y, t)

    def pressure_gradient_fn(self, t=0.0):
        return lambda x, y: self.pressure_gradient(x, y, t)

    def velocity_norm(self, t=0.0) -> float:
        return float(np.sqrt(square_integral(
            lambda x, y: sum(np.asarray(c) ** 2 for c in self.velocity(x, y, t)))))

    def pressure_norm(self, t=0.0) -> float:
        return float(np.sqrt(square_integral(lambda x, y: np.asarray(self.pressure(x, y, t)) ** 2)))


def square_integral(g, npts: int = 40) -> float:
    """Tensor Gauss-Legendre integral over the unit square."""
    s, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    x, y = np.meshgrid(s, s, indexing="ij")
    return float(np.einsum("i,j,ij->", w, w, np.broadcast_to(g(x, y), x.shape)))


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def _zero_velocity():
    zero2 = lambda x, y, t: (_z(x, y), _z(x, y))
    return dict(velocity=zero2,
                velocity_gradient=lambda x, y, t: ((_z(x, y), _z(x, y)), (_z(x, y), _z(x, y))),
                velocity_laplacian=zero2, velocity_dt=zero2)


def _vortex_velocity():
    """``((cos 2pi x - 1) sin 2pi y, -(cos 2pi y - 1) sin 2pi x)``."""
    def u(x, y, t):
        return ((np.cos(TWO_PI * x) - 1.0) * np.sin(TWO_PI * y),
                -(np.cos(TWO_PI * y) - 1.0) * np.sin(TWO_PI * x))

    def grad(x, y, t):
        sx, cx, sy, cy = np.sin(TWO_PI * x), np.cos(TWO_PI * x), np.sin(TWO_PI * y), np.cos(TWO_PI * y)
        return ((-TWO_PI * sx * sy, TWO_PI * (cx - 1.0) * cy),
                (-TWO_PI * (cy - 1.0) * cx, TWO_PI * sy * sx))

    def lap(x, y, t):
        k = TWO_PI ** 2
        sx, cx, sy, cy = np.sin(TWO_PI * x), np.cos(TWO_PI * x), np.sin(TWO_PI * y), np.cos(TWO_PI * y)
        return (-k * sy * (2.0 * cx - 1.0), k * sx * (2.0 * cy - 1.0))

    return dict(velocity=u, velocity_gradient=grad, velocity_laplacian=lap,
                velocity_dt=lambda x, y, t: (_z(x, y), _z(x, y)))


def _sin_pressure():
    return dict(
        pressure=lambda x, y, t: np.sin(TWO_PI * x) * np.sin(TWO_PI * y),
        pressure_gradient=lambda x, y, t: (TWO_PI * np.cos(TWO_PI * x) * np.sin(TWO_PI * y),
                                           TWO_PI * np.sin(TWO_PI * x) * np.cos(TWO_PI * y)),
    )


def _affine_pressure():
    return dict(pressure=lambda x, y, t: x + y - 1.0 + _z(x, y),
                pressure_gradient=lambda x, y, t: (_c(1.0, x, y), _c(1.0, x, y)))


def _quadratic_pressure():
    return dict(pressure=lambda x, y, t: x * x + x * y - y * y - 0.25 + _z(x, y),
                pressure_gradient=lambda x, y, t: (2.0 * x + y + _z(x, y), x - 2.0 * y + _z(x, y)))


def _quintic_pressure():
    return dict(
        pressure=lambda x, y, t: x ** 5 + x ** 4 * y ** 3 + x ** 2 * y + y ** 4 - 7.0 / 12.0 + _z(x, y),
        pressure_gradient=lambda x, y, t: (5 * x ** 4 + 4 * x ** 3 * y ** 3 + 2 * x * y + _z(x, y),
                                           3 * x ** 4 * y ** 2 + x ** 2 + 4 * y ** 3 + _z(x, y)),
    )


def _taylor_green():
    """Decaying vortex solving Navier-Stokes with ``nu = 1`` and ``f = 0``."""
    a, b = 8.0 * np.pi ** 2, 16.0 * np.pi ** 2

    def u(x, y, t):
        e = np.exp(-a * t)
        return (-np.cos(TWO_PI * x) * np.sin(TWO_PI * y) * e, np.sin(TWO_PI * x) * np.cos(TWO_PI * y) * e)

    def grad(x, y, t):
        e = np.exp(-a * t)
        sx, cx, sy, cy = np.sin(TWO_PI * x), np.cos(TWO_PI * x), np.sin(TWO_PI * y), np.cos(TWO_PI * y)
        return ((TWO_PI * sx * sy * e, -TWO_PI * cx * cy * e),
                (TWO_PI * cx * cy * e, -TWO_PI * sx * sy * e))

    def lap(x, y, t):
        ux, uy = u(x, y, t)
        return (-2.0 * TWO_PI ** 2 * ux, -2.0 * TWO_PI ** 2 * uy)

    def dt(x, y, t):
        ux, uy = u(x, y, t)
        return (-a * ux, -a * uy)

    def p(x, y, t):
        return -0.25 * (np.cos(FOUR_PI * x) + np.cos(FOUR_PI * y)) * np.exp(-b * t)

    def gp(x, y, t):
        e = np.exp(-b * t)
        return (np.pi * np.sin(FOUR_PI * x) * e + _z(x, y), np.pi * np.sin(FOUR_PI * y) * e + _z(x, y))

    return dict(velocity=u, velocity_gradient=grad, velocity_laplacian=lap, velocity_dt=dt,
                pressure=p, pressure_gradient=gp)


# --------------------------------------------------------------------------
# registry
# --------------------------------------------------------------------------

def _builtin():
    return [
        ManufacturedCase("noflow-sin", "u = 0, p = sin(2 pi x) sin(2 pi y)",
                         **_zero_velocity(), **_sin_pressure(), zero_velocity=True),
        ManufacturedCase("sin-sin", "vortex velocity, p = sin(2 pi x) sin(2 pi y)",
                         **_vortex_velocity(), **_sin_pressure()),
        ManufacturedCase("affine-p", "u = 0, p = x + y - 1",
                         **_zero_velocity(), **_affine_pressure(), zero_velocity=True),
        ManufacturedCase("sin-affine", "vortex velocity, p = x + y - 1",
                         **_vortex_velocity(), **_affine_pressure()),
        ManufacturedCase("quadratic-p", "u = 0, p = x^2 + x y - y^2 - 1/4",
                         **_zero_velocity(), **_quadratic_pressure(), zero_velocity=True),
        ManufacturedCase("quintic-p", "u = 0, p = x^5 + x^4 y^3 + x^2 y + y^4 - 7/12",
                         **_zero_velocity(), **_quintic_pressure(), zero_velocity=True),
        ManufacturedCase("sin-quintic", "vortex velocity, p = x^5 + x^4 y^3 + x^2 y + y^4 - 7/12",
                         **_vortex_velocity(), **_quintic_pressure()),
        ManufacturedCase("green-taylor", "decaying Taylor-Green vortex, nu = 1, f = 0",
                         **_taylor_green(), time_dependent=True, navier_stokes=True),
    ]


def _fd_first(g, x, y, t, h=1e-3):
    def d(shift_x, shift_y):
        return np.asarray(g(x + shift_x, y + shift_y, t))
    dx = (-d(2 * h, 0) + 8 * d(h, 0) - 8 * d(-h, 0) + d(-2 * h, 0)) / (12 * h)
    dy = (-d(0, 2 * h) + 8 * d(0, h) - 8 * d(0, -h) + d(0, -2 * h)) / (12 * h)
    return dx, dy


def _fd_laplacian(g, x, y, t, h=1e-3):
    def d(shift_x, shift_y):
        return np.asarray(g(x + shift_x, y + shift_y, t))
    c = 30 * d(0, 0)
    lx = (-d(2 * h, 0) + 16 * d(h, 0) - c + 16 * d(-h, 0) - d(-2 * h, 0)) / (12 * h * h)
    ly = (-d(0, 2 * h) + 16 * d(0, h) - c + 16 * d(0, -h) - d(0, -2 * h)) / (12 * h * h)
    return lx + ly


def check_case(case: ManufacturedCase, tol: float = 1e-6) -> None:
    """Spot-check the hand-coded derivatives on a 5 x 5 grid."""
    s = np.linspace(0.1, 0.9, 5)
    x, y = np.meshgrid(s, s, indexing="ij")
    problems = []
    for t in ((0.0, 0.004) if case.time_dependent else (0.0,)):
        u = np.asarray(case.velocity(x, y, t))
        grad = np.asarray(case.velocity_gradient(x, y, t))
        scale = max(1.0, np.abs(grad).max())
        for comp in range(2):
            fd = _fd_first(lambda a, b, tt: case.velocity(a, b, tt)[comp], x, y, t)
            if np.abs(np.asarray(fd) - grad[comp]).max() > tol * scale:
                problems.append(f"velocity gradient component {comp}")
            lap = np.asarray(case.velocity_laplacian(x, y, t))[comp]
            fdl = _fd_laplacian(lambda a, b, tt: case.velocity(a, b, tt)[comp], x, y, t)
            if np.abs(fdl - lap).max() > tol * max(1.0, np.abs(lap).max()):
                problems.append(f"velocity laplacian component {comp}")
        if np.abs(grad[0, 0] + grad[1, 1]).max() > 1e-10 * scale:
            problems.append("velocity is not divergence free")
        gp = np.asarray(case.pressure_gradient(x, y, t))
        fdp = np.asarray(_fd_first(case.pressure, x, y, t))
        if np.abs(fdp - gp).max() > tol * max(1.0, np.abs(gp).max()):
            problems.append("pressure gradient")
        dt = 1e-6
        fdt = (np.asarray(case.velocity(x, y, t + dt)) - np.asarray(case.velocity(x, y, t - dt))) / (2 * dt)
        if np.abs(fdt - np.asarray(case.velocity_dt(x, y, t))).max() > 1e-5 * max(1.0, np.abs(fdt).max()):
            problems.append("velocity time derivative")
        if case.zero_velocity and np.abs(u).max() != 0.0:
            problems.append("zero-velocity case has nonzero velocity")
        mean = square_integral(lambda a, b: case.pressure(a, b, t))
        if abs(mean) > 1e-12:
            problems.append(f"pressure mean {mean:.3e} is not zero")
    if problems:
        raise CaseDefinitionError(f"case {case.name!r}: " + "; ".join(problems))


_REGISTRY: dict[str, ManufacturedCase] = {}


def register_builtin_cases() -> dict[str, ManufacturedCase]:
    if not _REGISTRY:
        for case in _builtin():
            check_case(case)
            _REGISTRY[case.name] = case
    return _REGISTRY


def get_case(name) -> ManufacturedCase:
    if isinstance(name, ManufacturedCase):
        return name
    reg = register_builtin_cases()
    if name not in reg:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(reg)}")
    return reg[name]


def case_names() -> list[str]:
    return list(register_builtin_cases())
