"""Benchmark problems with known exact solutions.

* ``parabola``: indirect single-layer formulation on an open parabolic arc
  f(t) = (t, 1 - t^2).  The Dirichlet datum is manufactured so that the
  exact density is sqrt(1 + 4 t^2): the single-layer integral of the
  polynomial density-times-Jacobian 1 + 4 t^2 splits into a smooth part
  (Gauss, analytic integrand) and exact monomial log moments.

* ``closed-smooth``: direct formulation on a smooth closed cubic B-spline
  curve (a wavy oval of radius < 1, so the scaled operator stays positive
  definite).  The harmonic field u = -(x1 + x2) gives the Dirichlet datum;
  the exact density is its outward normal derivative (f1' - f2')/J.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import _CurveEval
from .errors import ConstructionError, UsageError
from .geometry import BoundaryCurve, load_curve
from .quadrature import gauss_legendre, monomial_log_moment
from .splines import BasisSpec, make_cyclic_basis, make_open_basis

__all__ = ["Problem", "define_problem", "PROBLEM_NAMES"]

PROBLEM_NAMES = ("parabola", "closed-smooth")

_SMOOTH_GAUSS_ORDER = 40
_N_WAVY = 12


@dataclass
class Problem:
    name: str
    formulation: str  # "indirect" or "direct"
    curve: BoundaryCurve
    make_space: Callable[[int, int], BasisSpec]
    dirichlet: Callable  # u_D as a function of the parameter
    exact_density: Callable
    exact_potential: Optional[Callable] = None  # exact u at field points
    interior_points: Optional[np.ndarray] = None


def _parabola() -> Problem:
    curve = load_curve(
        {
            "degree": 2,
            "knots": [-1, -1, -1, 1, 1, 1],
            "control_points": [[-1.0, 0.0], [0.0, 2.0], [1.0, 0.0]],
        }
    )
    xg, wg = gauss_legendre(_SMOOTH_GAUSS_ORDER, (-1.0, 1.0))
    dens_j = 1.0 + 4.0 * xg**2  # exact density times Jacobian at Gauss nodes

    def dirichlet(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        smooth = 0.5 * np.log(1.0 + (s[:, None] + xg[None, :]) ** 2) @ (
            wg * dens_j
        )
        log_part = monomial_log_moment(0, s, -1.0, 1.0) + 4.0 * (
            monomial_log_moment(2, s, -1.0, 1.0)
        )
        return -(smooth + log_part) / (2.0 * np.pi)

    def exact_density(t):
        return np.sqrt(1.0 + 4.0 * np.asarray(t, dtype=float) ** 2)

    def make_space(degree, nh):
        if nh < 2:
            raise ConstructionError("parabola problem needs >= 2 elements")
        return make_open_basis(degree, np.linspace(-1.0, 1.0, nh + 1))

    return Problem(
        name="parabola",
        formulation="indirect",
        curve=curve,
        make_space=make_space,
        dirichlet=dirichlet,
        exact_density=exact_density,
    )


def _closed_smooth() -> Problem:
    theta = 2.0 * np.pi * np.arange(_N_WAVY) / _N_WAVY
    radius = 0.55 + 0.12 * np.cos(3.0 * theta)
    ctrl = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    curve = load_curve(
        {
            "degree": 3,
            "closed": True,
            "breakpoints": np.linspace(0.0, 1.0, _N_WAVY + 1).tolist(),
            "control_points": ctrl.tolist(),
        }
    )
    ce = _CurveEval(curve)

    def dirichlet(s):
        f = ce.f(np.atleast_1d(np.asarray(s, dtype=float)))
        return -(f[:, 0] + f[:, 1])

    def exact_density(t):
        df = ce.dspl(np.clip(np.atleast_1d(np.asarray(t, float)), 0.0, 1.0))
        return (df[:, 0] - df[:, 1]) / np.linalg.norm(df, axis=-1)

    def exact_potential(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return -(points[:, 0] + points[:, 1])

    def make_space(degree, nh):
        if nh % _N_WAVY != 0:
            raise ConstructionError(
                f"closed-smooth meshes must refine the {_N_WAVY}-element "
                "geometry: nh must be a multiple of 12"
            )
        # The curve is C^2 at its breakpoints, so the exact density (a
        # normal derivative) is only C^1 there; matching that continuity
        # with repeated knots keeps the spline space's approximation order
        # at degree + 1 instead of capping it at 2.5.
        bp = np.linspace(0.0, 1.0, nh + 1)
        mult = np.ones(nh + 1, dtype=int)
        mult[:: nh // _N_WAVY] = max(1, degree - 1)
        return make_cyclic_basis(degree, bp, mult)

    interior = 0.3 * np.array(
        [[1.0, 0.0], [-0.5, 0.5], [0.0, -0.8], [0.6, 0.6], [-0.9, -0.3]]
    )
    return Problem(
        name="closed-smooth",
        formulation="direct",
        curve=curve,
        make_space=make_space,
        dirichlet=dirichlet,
        exact_density=exact_density,
        exact_potential=exact_potential,
        interior_points=interior,
    )


def define_problem(name: str) -> Problem:
    if name == "parabola":
        return _parabola()
    if name == "closed-smooth":
        return _closed_smooth()
    raise UsageError(
        f"unknown problem '{name}'; available: {', '.join(PROBLEM_NAMES)}"
    )
