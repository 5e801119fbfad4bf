"""Parametric boundary curves and the split Laplace kernel.

The single-layer kernel in parametric variables is split as
``ln ||f(s)-f(t)|| = K1(s,t) + K2(s,t)`` where ``K2`` carries the log
singularity in the parameter distance and ``K1 = 0.5 ln R`` is bounded,
with ``R`` the squared chord/parameter-distance ratio.

On closed curves the parameter distance is the periodic one,
``(L/pi)|sin(pi (t-s)/L)|``: with the plain ``|t - s|`` the chord length
vanishes at the parametric seam while the parameter distance does not,
which would hand ``K1`` a spurious singularity there.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConstructionError, GeometryError
from .splines import BasisSpec, make_cyclic_basis, make_open_basis

__all__ = [
    "BoundaryCurve",
    "KernelSplit",
    "curve_eval",
    "parametric_speed",
    "kernel_R",
    "kernel_K1",
    "kernel_K2",
    "kernel_Kbar",
    "load_curve",
]

_DIAG_REL = 1e-7
_J_SAMPLES = 1000


@dataclass(frozen=True)
class BoundaryCurve:
    """B-spline curve f(s) = sum_i Q_i B_i(s).

    ``control_points`` has one row per logical basis function; on closed
    curves the cyclic repetition of the first ``degree`` control points is
    applied internally.
    """

    basis: BasisSpec
    control_points: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.control_points, dtype=float)
        object.__setattr__(self, "control_points", q)
        if q.ndim != 2 or q.shape[1] != 2:
            raise ConstructionError("control points must be an (n, 2) array")
        if q.shape[0] != self.basis.dim:
            raise ConstructionError(
                f"{q.shape[0]} control points for a dimension-"
                f"{self.basis.dim} basis"
            )
        coeffs = (
            np.vstack([q, q[: self.basis.wrap]]) if self.basis.closed else q
        )
        object.__setattr__(self, "_coeffs", coeffs)
        s = np.linspace(self.basis.a, self.basis.b, _J_SAMPLES)
        if parametric_speed(self, s).min() <= 0.0:
            raise GeometryError("parametrization is not regular (J <= 0)")

    @property
    def closed(self) -> bool:
        return self.basis.closed

    @property
    def length(self) -> float:
        return self.basis.length

    def is_c2(self) -> bool:
        return self.basis.min_smoothness() >= 2


def _curve_spline(curve: BoundaryCurve, deriv_order: int) -> BSpline:
    """Per-curve cache of the scipy spline and its derivatives."""
    cache = curve.__dict__.get("_spline_cache")
    if cache is None:
        cache = {
            0: BSpline(
                curve.basis.knots,
                curve._coeffs,
                curve.basis.degree,
                extrapolate=False,
            )
        }
        object.__setattr__(curve, "_spline_cache", cache)
    while deriv_order not in cache:
        k = max(cache)
        cache[k + 1] = cache[k].derivative()
    return cache[deriv_order]


def curve_eval(curve: BoundaryCurve, s, deriv_order: int = 0) -> np.ndarray:
    """Point or derivative of f at s; vectorized, returns shape (..., 2)."""
    pts = np.atleast_1d(curve.basis._check_domain(s)).astype(float)
    out = _curve_spline(curve, deriv_order)(pts)
    if np.isscalar(s) or np.ndim(s) == 0:
        return out[0]
    return out


def parametric_speed(curve: BoundaryCurve, s) -> np.ndarray:
    """Arc-length Jacobian J(s) = ||f'(s)||."""
    der = curve_eval(curve, s, 1)
    return np.linalg.norm(der, axis=-1)


class KernelSplit:
    """K1, K2 and the normal-derivative kernel Kbar of a boundary curve."""

    def __init__(self, curve: BoundaryCurve):
        self.curve = curve
        self.period = curve.length
        self.eps_diag = _DIAG_REL * curve.length

    # -- parameter distance -------------------------------------------

    def _delta(self, s, t):
        """Signed parameter difference; wrapped to [-L/2, L/2) when closed."""
        delta = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
        if self.curve.closed:
            delta = delta - self.period * np.round(delta / self.period)
        return delta

    def param_distance(self, s, t):
        delta = self._delta(s, t)
        if self.curve.closed:
            x = np.abs(np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
            return (self.period / np.pi) * np.abs(np.sin(np.pi * x / self.period))
        return np.abs(delta)

    # -- pairwise evaluation (broadcasting) ----------------------------

    def _pairs(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(s.shape, t.shape)
        sb = np.broadcast_to(s, shape).ravel()
        tb = np.broadcast_to(t, shape).ravel()
        return sb, tb, shape

    def R(self, s, t):
        """Squared chord length over squared parameter distance.

        Within eps_diag of the diagonal the continuity limit J^2 at the
        midpoint replaces the cancellation-prone divided difference.
        """
        sb, tb, shape = self._pairs(s, t)
        delta = self._delta(sb, tb)
        near = np.abs(delta) <= self.eps_diag
        out = np.empty(len(sb))
        far = ~near
        if far.any():
            fs = curve_eval(self.curve, sb[far])
            ft = curve_eval(self.curve, tb[far])
            dist2 = np.sum((fs - ft) ** 2, axis=-1)
            out[far] = dist2 / self.param_distance(sb[far], tb[far]) ** 2
        if near.any():
            mid = sb[near] + 0.5 * delta[near]
            if self.curve.closed:
                a, L = self.curve.basis.a, self.period
                mid = a + np.mod(mid - a, L)
            out[near] = parametric_speed(self.curve, mid) ** 2
        if out.min() <= 0.0:
            raise GeometryError(
                "R <= 0: degenerate or self-intersecting curve at sampled pair"
            )
        return out.reshape(shape) if shape else float(out[0])

    def K1(self, s, t):
        return 0.5 * np.log(self.R(s, t))

    def K2(self, s, t):
        """ln of the parameter distance (periodic on closed curves)."""
        sb, tb, shape = self._pairs(s, t)
        with np.errstate(divide="ignore"):
            out = np.log(self.param_distance(sb, tb))
        return out.reshape(shape) if shape else float(out[0])

    def K(self, s, t):
        """Full kernel ln ||f(s) - f(t)|| (diagonal-stabilized: K1 + K2)."""
        return self.K1(s, t) + self.K2(s, t)

    def Kbar(self, s, t):
        """Normal-derivative kernel times J(t); needs a C^2 curve on the
        diagonal (curvature limit)."""
        sb, tb, shape = self._pairs(s, t)
        delta = self._delta(sb, tb)
        near = np.abs(delta) <= self.eps_diag
        out = np.empty(len(sb))
        far = ~near
        if far.any():
            fs = curve_eval(self.curve, sb[far])
            ft = curve_eval(self.curve, tb[far])
            dt = curve_eval(self.curve, tb[far], 1)
            diff = ft - fs
            dist2 = np.sum(diff**2, axis=-1)
            if dist2.min() <= 0.0:
                raise GeometryError("coincident points off the diagonal")
            out[far] = (diff[:, 1] * dt[:, 0] - diff[:, 0] * dt[:, 1]) / dist2
        if near.any():
            if not self.curve.is_c2():
                raise GeometryError(
                    "diagonal limit of the normal-derivative kernel needs a "
                    "C^2 curve"
                )
            x = sb[near]
            d1 = curve_eval(self.curve, x, 1)
            d2 = curve_eval(self.curve, x, 2)
            j2 = np.sum(d1**2, axis=-1)
            out[near] = 0.5 * (d1[:, 1] * d2[:, 0] - d1[:, 0] * d2[:, 1]) / j2
        return out.reshape(shape) if shape else float(out[0])

    # -- grid evaluation (assembly fast path) ---------------------------

    def K1_grid(self, svals, tvals) -> np.ndarray:
        """K1 on the outer grid svals x tvals with one curve evaluation per
        axis; used by assembly, where the grid is the node vector squared."""
        svals = np.asarray(svals, dtype=float)
        tvals = np.asarray(tvals, dtype=float)
        fs = curve_eval(self.curve, svals)
        ft = curve_eval(self.curve, tvals)
        dx = fs[:, 0][:, None] - ft[:, 0][None, :]
        dy = fs[:, 1][:, None] - ft[:, 1][None, :]
        dist2 = dx * dx + dy * dy
        delta = self._delta(svals[:, None], tvals[None, :])
        p = self.param_distance(svals[:, None], tvals[None, :])
        near = np.abs(delta) <= self.eps_diag
        r = np.empty_like(dist2)
        np.divide(dist2, p * p, out=r, where=~near)
        if near.any():
            mid = (svals[:, None] + 0.5 * delta)[near]
            if self.curve.closed:
                a, L = self.curve.basis.a, self.period
                mid = a + np.mod(mid - a, L)
            r[near] = parametric_speed(self.curve, mid) ** 2
        if r.min() <= 0.0:
            raise GeometryError("R <= 0 on assembly grid")
        return 0.5 * np.log(r)

    def Kbar_points(self, svals, tvals) -> np.ndarray:
        """Kbar on the outer grid svals x tvals (both 1D)."""
        svals = np.asarray(svals, dtype=float)
        tvals = np.asarray(tvals, dtype=float)
        fs = curve_eval(self.curve, svals)
        ft = curve_eval(self.curve, tvals)
        dt = curve_eval(self.curve, tvals, 1)
        dx = ft[:, 0][None, :] - fs[:, 0][:, None]
        dy = ft[:, 1][None, :] - fs[:, 1][:, None]
        dist2 = dx * dx + dy * dy
        delta = self._delta(svals[:, None], tvals[None, :])
        near = np.abs(delta) <= self.eps_diag
        out = np.empty_like(dist2)
        np.divide(
            dy * dt[:, 0][None, :] - dx * dt[:, 1][None, :],
            dist2,
            out=out,
            where=~near,
        )
        if near.any():
            if not self.curve.is_c2():
                raise GeometryError(
                    "diagonal limit of the normal-derivative kernel needs a "
                    "C^2 curve"
                )
            srep = np.broadcast_to(svals[:, None], near.shape)[near]
            d1 = curve_eval(self.curve, srep, 1)
            d2 = curve_eval(self.curve, srep, 2)
            j2 = np.sum(d1**2, axis=-1)
            out[near] = 0.5 * (d1[:, 1] * d2[:, 0] - d1[:, 0] * d2[:, 1]) / j2
        return out


def kernel_R(curve: BoundaryCurve, s, t):
    return KernelSplit(curve).R(s, t)


def kernel_K1(curve: BoundaryCurve, s, t):
    return KernelSplit(curve).K1(s, t)


def kernel_K2(curve: BoundaryCurve, s, t):
    return KernelSplit(curve).K2(s, t)


def kernel_Kbar(curve: BoundaryCurve, s, t):
    return KernelSplit(curve).Kbar(s, t)


def load_curve(source) -> BoundaryCurve:
    """Build a BoundaryCurve from a JSON file path or an equivalent dict.

    Keys: degree, closed, control_points, and either breakpoints
    (+ optional multiplicities, open only) or a full extended knot vector.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "read"):
        if hasattr(source, "read"):
            data = json.load(source)
        else:
            with open(source) as fh:
                data = json.load(fh)
    else:
        data = dict(source)
    degree = int(data["degree"])
    closed = bool(data.get("closed", False))
    if "knots" in data:
        basis = BasisSpec(degree=degree, knots=np.asarray(data["knots"], float),
                          closed=closed)
    elif "breakpoints" in data:
        if closed:
            basis = make_cyclic_basis(degree, data["breakpoints"])
        else:
            basis = make_open_basis(
                degree, data["breakpoints"], data.get("multiplicities")
            )
    else:
        raise ConstructionError("curve input needs 'knots' or 'breakpoints'")
    return BoundaryCurve(basis=basis, control_points=data["control_points"])
