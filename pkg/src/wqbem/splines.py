"""B-spline bases on open (clamped) and closed (cyclic) parameter domains.

A basis is described by an extended knot vector ``T = {t_1, ..., t_{N+d+1}}``
with ``t_{d+1} = a`` and ``t_{N+1} = b``.  The plain basis has ``N`` functions;
on a closed domain the functions crossing the seam are merged with their
periodic images (two-piece wrap-around supports): with seam knot
multiplicity ``m`` there are ``d + 1 - m`` such functions, so the effective
dimension is ``N - (d + 1 - m)``.  All indices in code are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConstructionError, DomainError

__all__ = [
    "BasisSpec",
    "RefinedBasis",
    "make_open_basis",
    "make_cyclic_basis",
    "refine_uniform",
    "find_span",
    "eval_basis",
    "collocation_matrix",
    "support",
    "active_functions",
    "product_integral",
    "weighted_basis_integrals",
    "local_poly_coeffs",
    "local_basis_coeffs",
]

_DOMAIN_RTOL = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """Degree + extended knot vector + open/closed flag."""

    degree: int
    knots: np.ndarray
    closed: bool = False

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        d = self.degree
        if d < 0:
            raise ConstructionError("degree must be non-negative")
        if knots.ndim != 1 or len(knots) < 2 * d + 2:
            raise ConstructionError("knot vector too short for degree")
        if np.any(np.diff(knots) < 0):
            raise ConstructionError("knots must be non-decreasing")
        if self.nplain < d + 1:
            raise ConstructionError("basis needs at least degree+1 functions")
        if self.closed and self.dim < 1:
            raise ConstructionError("cyclic basis needs dimension >= 1")
        # inner breakpoints must keep a continuous image: multiplicity <= d
        vals, mult = self._break_data()
        if np.any(mult[1:-1] > max(d, 1)):
            raise ConstructionError("inner breakpoint multiplicity exceeds degree")

    # -- bookkeeping ----------------------------------------------------

    @property
    def nplain(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def seam_multiplicity(self) -> int:
        """Knot multiplicity of the seam value ``a`` (closed bases)."""
        tol = _DOMAIN_RTOL * max(float(self.knots[-1] - self.knots[0]), 1.0)
        return int(np.count_nonzero(np.abs(self.knots - self.a) <= tol))

    @property
    def wrap(self) -> int:
        """Number of plain functions folded with their periodic images."""
        return self.degree + 1 - self.seam_multiplicity if self.closed else 0

    @property
    def dim(self) -> int:
        return self.nplain - self.wrap

    @property
    def a(self) -> float:
        return float(self.knots[self.degree])

    @property
    def b(self) -> float:
        return float(self.knots[self.nplain])

    @property
    def length(self) -> float:
        return self.b - self.a

    def _break_data(self):
        inner = self.knots[self.degree : self.nplain + 1]
        vals, mult = np.unique(inner, return_counts=True)
        return vals, mult

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """Distinct breakpoints of the partition, endpoints included."""
        return self._break_data()[0]

    @cached_property
    def multiplicities(self) -> np.ndarray:
        return self._break_data()[1]

    @cached_property
    def elements(self) -> np.ndarray:
        """(n_el, 2) array of element intervals."""
        bp = self.breakpoints
        return np.column_stack([bp[:-1], bp[1:]])

    @property
    def n_elements(self) -> int:
        return len(self.breakpoints) - 1

    def fold(self, plain_index):
        """Map a plain function index to its logical (cyclic) index."""
        if not self.closed:
            return plain_index
        return plain_index % self.dim

    def min_smoothness(self) -> int:
        """Continuity order C^k guaranteed at the worst breakpoint.

        For a cyclic basis the seam counts like an inner breakpoint; for a
        single-element open basis the piece is a polynomial (returns degree).
        """
        vals, mult = self._break_data()
        inner = list(mult[1:-1])
        if self.closed:
            inner.append(self.seam_multiplicity)
        if not inner:
            return self.degree
        return self.degree - max(inner)

    def _check_domain(self, s):
        s = np.asarray(s, dtype=float)
        tol = _DOMAIN_RTOL * max(self.length, 1.0)
        if np.any(s < self.a - tol) or np.any(s > self.b + tol):
            raise DomainError(
                f"point outside parametric domain [{self.a}, {self.b}]"
            )
        return np.clip(s, self.a, self.b)


@dataclass(frozen=True)
class RefinedBasis:
    """Exactness space: each parent element uniformly split into nref pieces."""

    parent: BasisSpec
    nref: int
    basis: BasisSpec = field(repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim


def make_open_basis(degree, breakpoints, multiplicities=None) -> BasisSpec:
    """Clamped basis: end knots repeated degree+1 times.

    ``multiplicities`` applies to the inner breakpoints (default all 1).
    """
    bp = np.asarray(breakpoints, dtype=float)
    if len(bp) < 2 or np.any(np.diff(bp) <= 0):
        raise ConstructionError("need >= 2 strictly increasing breakpoints")
    inner = bp[1:-1]
    if multiplicities is None:
        mult = np.ones(len(inner), dtype=int)
    else:
        mult = np.asarray(multiplicities, dtype=int)
        if len(mult) == len(bp):  # full list: end entries must be clamped
            if mult[0] > degree + 1 or mult[-1] > degree + 1:
                raise ConstructionError("end multiplicity exceeds degree+1")
            mult = mult[1:-1]
        elif len(mult) != len(inner):
            raise ConstructionError("multiplicity list does not match breakpoints")
    if np.any(mult < 1) or np.any(mult > degree):
        raise ConstructionError("inner multiplicities must lie in [1, degree]")
    knots = np.concatenate(
        [
            np.full(degree + 1, bp[0]),
            np.repeat(inner, mult),
            np.full(degree + 1, bp[-1]),
        ]
    )
    return BasisSpec(degree=degree, knots=knots, closed=False)


def make_cyclic_basis(degree, breakpoints, multiplicities=None) -> BasisSpec:
    """Periodic basis over a closed parameter domain.

    Auxiliary knots are the periodic images of the knots nearest to the
    opposite end, so the layout wraps with period ``b - a``; the effective
    dimension is the total knot multiplicity over one period.
    ``multiplicities`` (default all 1) is aligned with ``breakpoints`` and
    must match at the two seam entries.
    """
    bp = np.asarray(breakpoints, dtype=float)
    if len(bp) < 3 or np.any(np.diff(bp) <= 0):
        raise ConstructionError(
            "cyclic basis needs >= 3 strictly increasing breakpoints"
        )
    if multiplicities is None:
        mult = np.ones(len(bp), dtype=int)
    else:
        mult = np.asarray(multiplicities, dtype=int)
        if len(mult) != len(bp):
            raise ConstructionError("multiplicity list does not match breakpoints")
        if mult[0] != mult[-1]:
            raise ConstructionError("seam multiplicities must agree")
    if np.any(mult < 1) or np.any(mult > degree):
        raise ConstructionError("cyclic multiplicities must lie in [1, degree]")
    period = bp[-1] - bp[0]
    one_period = np.repeat(bp[:-1], mult[:-1])
    dim = len(one_period)
    m_seam = int(mult[0])
    start = dim + m_seam - 1 - degree
    if start < 0:
        raise ConstructionError(
            "cyclic basis needs more breakpoints for this degree"
        )
    full = np.concatenate(
        [one_period - period, one_period, one_period + period]
    )
    knots = full[start : start + dim + 2 * degree + 2 - m_seam]
    return BasisSpec(degree=degree, knots=knots, closed=True)


def refine_uniform(basis: BasisSpec, nref: int) -> RefinedBasis:
    """Split each element into ``nref`` equal pieces (new knots simple)."""
    if nref < 1:
        raise ConstructionError("nref must be >= 1")
    d = basis.degree
    bp = basis.breakpoints
    mult = basis.multiplicities.copy()
    pieces = [
        np.linspace(lo, hi, nref + 1)[:-1] for lo, hi in zip(bp[:-1], bp[1:])
    ]
    new_bp = np.concatenate(pieces + [bp[-1:]])
    new_mult = np.ones(len(new_bp), dtype=int)
    new_mult[::nref] = mult
    if basis.closed:
        new_mult[0] = new_mult[-1] = basis.seam_multiplicity
        refined = make_cyclic_basis(d, new_bp, new_mult)
    else:
        refined = make_open_basis(d, new_bp, new_mult)
    return RefinedBasis(parent=basis, nref=nref, basis=refined)


# -- evaluation ----------------------------------------------------------


def find_span(basis: BasisSpec, s: float) -> int:
    """Index i with knots[i] <= s < knots[i+1]; s = b maps to the last span."""
    knots = basis.knots
    i = int(np.searchsorted(knots, s, side="right")) - 1
    return min(max(i, basis.degree), basis.nplain - 1)


def _all_ders(basis: BasisSpec, s: float, nders: int):
    """Non-zero basis functions and derivatives at s (NURBS-book A2.3).

    Returns (span, ders) with ders of shape (nders+1, degree+1); column k
    holds the value of plain function span-degree+k.
    """
    d = basis.degree
    knots = basis.knots
    span = find_span(basis, s)
    ndu = np.empty((d + 1, d + 1))
    left = np.empty(d + 1)
    right = np.empty(d + 1)
    ndu[0, 0] = 1.0
    for j in range(1, d + 1):
        left[j] = s - knots[span + 1 - j]
        right[j] = knots[span + j] - s
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((nders + 1, d + 1))
    ders[0, :] = ndu[:, d]
    a = np.empty((2, d + 1))
    for r in range(d + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nders + 1):
            dd = 0.0
            rk, pk = r - k, d - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                dd = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else d - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                dd += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                dd += a[s2, k] * ndu[r, pk]
            ders[k, r] = dd
            s1, s2 = s2, s1
    fac = 1.0
    for k in range(1, nders + 1):
        fac *= d - k + 1
        ders[k, :] *= fac
    return span, ders


def eval_basis(basis: BasisSpec, s: float, deriv_order: int = 0):
    """Non-zero basis (or derivative) values at s.

    Returns (indices, values): at most degree+1 logical indices; wrap-around
    functions of a cyclic basis are folded onto a single index.
    """
    if deriv_order not in (0, 1, 2):
        raise DomainError("deriv_order must be 0, 1 or 2")
    s = float(basis._check_domain(s))
    span, ders = _all_ders(basis, s, deriv_order)
    plain = np.arange(span - basis.degree, span + 1)
    return basis.fold(plain), ders[deriv_order].copy()


def collocation_matrix(basis: BasisSpec, pts, deriv: int = 0) -> np.ndarray:
    """Dense (dim, n_pts) matrix of basis (derivative) values."""
    pts = np.atleast_1d(basis._check_domain(pts))
    out = np.zeros((basis.dim, len(pts)))
    for n, s in enumerate(pts):
        idx, vals = eval_basis(basis, s, deriv)
        np.add.at(out[:, n], idx, vals)
    return out


# -- supports ------------------------------------------------------------


def _plain_support(basis: BasisSpec, p: int):
    lo = max(basis.knots[p], basis.a)
    hi = min(basis.knots[p + basis.degree + 1], basis.b)
    return (float(lo), float(hi)) if hi > lo else None


def support(basis: BasisSpec, i: int):
    """Support of logical function i as a tuple of intervals in [a, b]."""
    if not 0 <= i < basis.dim:
        raise ConstructionError(f"function index {i} out of range")
    pieces = [i]
    if basis.closed and i < basis.wrap:
        pieces.append(i + basis.dim)
    ivals = [_plain_support(basis, p) for p in pieces]
    return tuple(iv for iv in ivals if iv is not None)


def _overlaps(ivals_a, ivals_b, tol=0.0) -> bool:
    return any(
        min(a_hi, b_hi) - max(a_lo, b_lo) > tol
        for a_lo, a_hi in ivals_a
        for b_lo, b_hi in ivals_b
    )


def active_functions(basis: BasisSpec, interval_or_ivals) -> np.ndarray:
    """Indices of basis functions whose support overlaps the interval(s)."""
    ivals = interval_or_ivals
    if ivals and np.isscalar(ivals[0]):
        ivals = (tuple(ivals),)
    return np.array(
        [j for j in range(basis.dim) if _overlaps(support(basis, j), ivals)],
        dtype=int,
    )


# -- per-element polynomial representation ---------------------------------


@lru_cache(maxsize=32)
def _cheb_setup(degree: int):
    """Chebyshev interpolation points on (-1, 1) and the inverse of their
    increasing-power Vandermonde matrix (read-only, cached per degree)."""
    x = np.cos(np.pi * (2 * np.arange(degree + 1) + 1) / (2 * degree + 2))
    vinv = np.linalg.inv(np.vander(x, degree + 1, increasing=True))
    x.setflags(write=False)
    vinv.setflags(write=False)
    return x, vinv


def local_poly_coeffs(values_fn, elements, degree) -> np.ndarray:
    """Per-element polynomial coefficients, in powers of (s - midpoint),
    of the column functions sampled through ``values_fn(points) ->
    (n_pts, n_cols)``.

    Interpolation at Chebyshev points about the element midpoint keeps the
    Vandermonde solve well conditioned; the result is exact for piecewise
    polynomials of degree <= ``degree`` and a near-best approximation for
    per-element-analytic factors such as the parametric speed.  Returns an
    array of shape (n_el * (degree+1), n_cols); row e*(degree+1)+p holds
    the coefficient of (s - mid_e)^p.
    """
    if degree < 0:
        raise ConstructionError("polynomial degree must be non-negative")
    x, vinv = _cheb_setup(degree)
    powers = np.arange(degree + 1)
    elements = np.asarray(elements, dtype=float)
    n_el = len(elements)
    half = 0.5 * (elements[:, 1] - elements[:, 0])
    mid = 0.5 * (elements[:, 0] + elements[:, 1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = np.asarray(values_fn(pts), dtype=float)
    vals = vals.reshape(n_el, degree + 1, vals.shape[1])
    coeffs = np.einsum("pq,eqc->epc", vinv, vals)
    coeffs *= (half[:, None] ** -powers[None, :])[:, :, None]
    return coeffs.reshape(n_el * (degree + 1), vals.shape[2])


def local_basis_coeffs(basis: BasisSpec, elements, degree, scale_fn=None):
    """Per-element polynomial coefficients of the active basis functions.

    Like ``local_poly_coeffs`` but exploiting locality: on each element
    exactly ``basis.degree + 1`` basis functions are nonzero, so only those
    columns are interpolated (optionally times a smooth scale factor such
    as the parametric speed).  Each element must lie inside a single knot
    span of ``basis``.  Returns ``(coeffs, cols)``: ``coeffs[e, p, a]`` is
    the coefficient of ``(s - mid_e)**p`` for the a-th active function on
    element e and ``cols[e, a]`` its global (folded, on closed bases)
    index.
    """
    if degree < 0:
        raise ConstructionError("polynomial degree must be non-negative")
    x, vinv = _cheb_setup(degree)
    powers = np.arange(degree + 1)
    elements = np.asarray(elements, dtype=float)
    n_el = len(elements)
    half = 0.5 * (elements[:, 1] - elements[:, 0])
    mid = 0.5 * (elements[:, 0] + elements[:, 1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    mat = BSpline.design_matrix(pts, basis.knots, basis.degree)
    width = basis.degree + 1
    # each CSR row holds at most width entries, so the total count pins
    # them all to exactly width (points strictly inside knot spans)
    if mat.indptr[-1] != len(pts) * width:
        raise ConstructionError(
            "local interpolation points must lie strictly inside knot spans"
        )
    cols_all = mat.indices.reshape(n_el, degree + 1, width)
    # spans are monotone along the sorted points of an element, so equal
    # first and last rows force one knot span for the whole element
    if np.any(cols_all[:, 0, :] != cols_all[:, -1, :]):
        raise ConstructionError(
            "each element must lie inside a single knot span"
        )
    cols = cols_all[:, 0, :].copy()
    if basis.closed:
        cols[cols >= basis.dim] -= basis.dim
    vals = mat.data.reshape(n_el, degree + 1, width)
    if scale_fn is not None:
        scale = np.asarray(scale_fn(pts), dtype=float)
        vals = vals * scale.reshape(n_el, degree + 1, 1)
    coeffs = np.einsum("pq,eqk->epk", vinv, vals)
    coeffs *= (half[:, None] ** -powers[None, :])[:, :, None]
    return coeffs, cols


# -- exact product integrals ----------------------------------------------


def _gauss_points(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _elements_overlapping(refined: BasisSpec, ivals):
    els = []
    for lo, hi in refined.elements:
        if any(min(hi, b_hi) - max(lo, b_lo) > 0 for b_lo, b_hi in ivals):
            els.append((lo, hi))
    return els


def weighted_basis_integrals(refined: RefinedBasis, i: int) -> np.ndarray:
    """Exact integrals of every refined function against parent function i.

    The integrand is piecewise polynomial of degree <= 2*degree on each
    refined element, so fixed-order Gauss is exact; returns a dense vector
    of length refined.dim.
    """
    parent = refined.parent
    fine = refined.basis
    order = (parent.degree + fine.degree) // 2 + 2
    x, w = _gauss_points(order)
    mu = np.zeros(fine.dim)
    for lo, hi in _elements_overlapping(fine, support(parent, i)):
        half = 0.5 * (hi - lo)
        pts = 0.5 * (lo + hi) + half * x
        for s, wq in zip(pts, w):
            pidx, pvals = eval_basis(parent, s)
            sel = np.flatnonzero(pidx == i)
            if sel.size == 0:
                continue
            bi = float(pvals[sel].sum())
            fidx, fvals = eval_basis(fine, s)
            np.add.at(mu, fidx, (half * wq * bi) * fvals)
    return mu


def product_integral(refined: RefinedBasis, j: int, i: int) -> float:
    """Exact integral of refined function j times parent function i."""
    if not 0 <= j < refined.basis.dim:
        raise ConstructionError(f"refined index {j} out of range")
    return float(weighted_basis_integrals(refined, i)[j])
