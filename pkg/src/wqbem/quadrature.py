"""Quadrature machinery: shared node vector, B-spline weighted rules for
regular integrands, and log-singular weighted rules built from recursively
computed modified moments.

All rule families share one node vector; only the weights change with the
weight function (one basis function, or ``ln|t - s|`` at a fixed ``s``).
On closed domains the singular weight is the periodic log distance
``ln((L/pi) |sin(pi (t - s)/L)|)``, which keeps the smooth kernel remainder
free of a spurious singularity at the parametric seam.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.linalg

from .errors import ConstructionError, MetricError
from .splines import (
    BasisSpec,
    RefinedBasis,
    active_functions,
    collocation_matrix,
    support,
    weighted_basis_integrals,
)

__all__ = [
    "NodeVector",
    "WeightedRule",
    "gauss_legendre",
    "build_nodes",
    "build_regular_rules",
    "build_singular_rules",
    "modified_moments",
    "monomial_log_moment",
    "centered_log_moments",
    "log_power_integral",
    "rules_matrix",
    "uniform_pair_log_moments",
    "quad_error_ERR",
]

_DEDUP_RTOL = 1e-12
_RANK_RTOL = 1e-10
EXACTNESS_TOL = 1e-11

# Gauss order for the smooth periodic correction of the closed-domain
# singular weight; the integrand is analytic so this is ample.
_PERIODIC_CORR_ORDER = 24


@lru_cache(maxsize=64)
def _leggauss_unit(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(order: int, interval=(-1.0, 1.0)):
    """Gauss-Legendre nodes and weights on an interval."""
    if order < 1:
        raise ConstructionError("Gauss order must be >= 1")
    x, w = _leggauss_unit(order)
    lo, hi = interval
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * x, half * w


@dataclass(frozen=True)
class NodeVector:
    """Shared quadrature nodes with their refined-element bookkeeping."""

    nodes: np.ndarray
    refined: RefinedBasis = field(repr=False)
    element_index: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.nodes)


def build_nodes(refined: RefinedBasis) -> NodeVector:
    """Node vector: d+2 uniform points on the first and last refined element,
    midpoints on inner elements, plus every breakpoint.

    On a closed domain there are no endpoint elements: every element is
    treated as inner (midpoint + breakpoint), nodes live in [a, b).
    Elements touching a breakpoint of multiplicity m > 1 carry m - 1 extra
    uniformly spaced interior points per such breakpoint, matching the
    locally enlarged space the reduced continuity creates.
    Schoenberg-Whitney is verified by a rank check of the collocation matrix.
    """
    fine = refined.basis
    d = fine.degree
    els = fine.elements
    pts = [fine.breakpoints]
    extra = fine.multiplicities - 1
    if fine.closed:
        extra = extra.copy()
        extra[0] = extra[-1] = fine.seam_multiplicity - 1
    n_inner = 1 + extra[:-1] + extra[1:]
    if not fine.closed:
        n_inner[0] = n_inner[-1] = d  # end elements: d+2 points incl. ends
    if np.all(n_inner == 1):
        mids = 0.5 * (els[:, 0] + els[:, 1])
        if fine.closed:
            pts.append(mids)
        else:
            pts.append(np.linspace(els[0, 0], els[0, 1], d + 2))
            pts.append(np.linspace(els[-1, 0], els[-1, 1], d + 2))
            if len(els) > 2:
                pts.append(mids[1:-1])
    else:
        for e, (lo, hi) in enumerate(els):
            k = int(n_inner[e])
            pts.append(lo + (hi - lo) * (np.arange(1, k + 1) / (k + 1)))
    nodes = np.sort(np.concatenate(pts))
    tol = _DEDUP_RTOL * fine.length
    keep = np.concatenate([[True], np.diff(nodes) > tol])
    nodes = nodes[keep]
    if fine.closed and fine.b - nodes[-1] <= tol:
        nodes = nodes[:-1]

    if len(nodes) < fine.dim:
        raise ConstructionError(
            f"{len(nodes)} nodes cannot satisfy Schoenberg-Whitney for "
            f"{fine.dim} exactness functions"
        )
    coll = collocation_matrix(fine, nodes)
    sv = scipy.linalg.svdvals(coll)
    if sv[-1] <= _RANK_RTOL * sv[0]:
        raise ConstructionError(
            "node vector violates Schoenberg-Whitney (rank-deficient "
            "collocation matrix)"
        )
    el_idx = np.clip(
        np.searchsorted(fine.breakpoints, nodes, side="right") - 1,
        0,
        len(els) - 1,
    )
    return NodeVector(nodes=nodes, refined=refined, element_index=el_idx)


@dataclass(frozen=True)
class WeightedRule:
    """Weights of one weighted quadrature rule on the shared node vector.

    ``tag`` is ("basis", i) for the regular family or ("log", s) for the
    singular family; ``idx`` lists the active node indices.
    """

    tag: tuple
    idx: np.ndarray
    weights: np.ndarray

    def apply(self, values_at_nodes: np.ndarray) -> float:
        """Apply the rule to integrand values given at *all* nodes."""
        return float(self.weights @ np.asarray(values_at_nodes)[self.idx])

    def full_weights(self, n_quad: int) -> np.ndarray:
        w = np.zeros(n_quad)
        w[self.idx] = self.weights
        return w


def rules_matrix(rules, n_quad: int) -> np.ndarray:
    """Stack rule weights into a dense (n_rules, n_quad) matrix."""
    out = np.zeros((len(rules), n_quad))
    for k, rule in enumerate(rules):
        out[k, rule.idx] = rule.weights
    return out


# -- closed-form pieces of the modified moments ---------------------------


def log_power_integral(j: int, z1, z2):
    """Exact value of the antiderivative bracket of z^j ln|z| between z1, z2.

    The bracket z^{j+1}/(j+1) (ln|z| - 1/(j+1)) evaluates to 0 at z = 0
    (removable limit), handled by an explicit branch.
    """

    def F(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        nz = z != 0.0
        zz = z[nz]
        out[nz] = zz ** (j + 1) / (j + 1) * (np.log(np.abs(zz)) - 1.0 / (j + 1))
        return out

    return F(z2) - F(z1)


def monomial_log_moment(q: int, s, lo: float, hi: float):
    """Exact value of the integral of t^q ln|t - s| over [lo, hi]."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for j in range(q + 1):
        out += comb(q, j) * s ** (q - j) * log_power_integral(j, lo - s, hi - s)
    return out


def centered_log_moments(max_power, s, half):
    """Exact integrals of u^p ln|u - s| over (-half, half), p = 0..max_power.

    ``s`` (singular abscissa relative to the interval midpoint) and
    ``half`` (half-width) broadcast together; returns an array of shape
    (max_power + 1,) + broadcast shape.
    """
    s, half = np.broadcast_arrays(
        np.asarray(s, dtype=float), np.asarray(half, dtype=float)
    )
    n = max_power + 1
    z = np.stack([-half - s, half - s])
    zero = z == 0.0
    with np.errstate(divide="ignore"):
        lz = np.log(np.abs(z))
    lz[zero] = 0.0  # removable limit: the z^{j+1} factor vanishes first
    brackets = np.empty((n,) + s.shape)
    zp = z.copy()
    for j in range(n):
        term = zp / (j + 1) * (lz - 1.0 / (j + 1))
        brackets[j] = term[1] - term[0]
        zp *= z
    spow = np.empty((n,) + s.shape)
    spow[0] = 1.0
    for k in range(1, n):
        spow[k] = spow[k - 1] * s
    # out[p] = sum_j C(p, j) s^{p-j} brackets[j], one contraction call
    cmat = np.zeros((n, n))
    kmat = np.zeros((n, n), dtype=int)
    for p in range(n):
        for j in range(p + 1):
            cmat[p, j] = comb(p, j)
            kmat[p, j] = p - j
    flat = s.size
    out = np.einsum(
        "pj,pjn,jn->pn",
        cmat,
        spow.reshape(n, flat)[kmat],
        brackets.reshape(n, flat),
        optimize=True,
    )
    return out.reshape((n,) + s.shape)


def _periodic_log_gap(x, period):
    """ln of the ratio between the periodic distance (L/pi)|sin(pi x / L)|
    and |x|; analytic for |x| < L, value 0 at x = 0."""
    return np.log(np.abs(np.sinc(x / period)))


def _base_log_moments(basis: BasisSpec, s: np.ndarray, periodic: bool,
                      max_power: int = 0):
    """I_k over every knot span for the degree-0 functions, k = 0..kmax.

    ``kmax = degree + max_power``: the degree-raising recursion consumes one
    power per level, so carrying extra powers in the base table leaves
    moments of t^q B_j(t) up to q = max_power at full degree.  Returns an
    array of shape (kmax+1, n_spans, n_s).  Spans of zero length or sticking
    outside [a, b] contribute zero.
    """
    knots = basis.knots
    d = basis.degree + max_power
    n_sp = len(knots) - 1
    n_s = len(s)
    tol = _DEDUP_RTOL * max(basis.length, 1.0)
    t_lo, t_hi = knots[:-1], knots[1:]
    valid = (t_hi > t_lo) & (t_lo >= basis.a - tol) & (t_hi <= basis.b + tol)

    base = np.zeros((d + 1, n_sp, n_s))
    lo = t_lo[valid][:, None]
    hi = t_hi[valid][:, None]
    if periodic:
        period = basis.length
        mid = 0.5 * (lo + hi)
        shift = np.round((mid - s[None, :]) / period) * period
        s_eff = s[None, :] + shift
    else:
        s_eff = np.broadcast_to(s[None, :], (lo.shape[0], n_s))

    bracket = [log_power_integral(j, lo - s_eff, hi - s_eff) for j in range(d + 1)]
    vals = np.zeros((d + 1, lo.shape[0], n_s))
    for k in range(d + 1):
        for j in range(k + 1):
            vals[k] += comb(k, j) * s_eff ** (k - j) * bracket[j]

    if periodic:
        # smooth correction: ln(periodic distance) - ln|t - s_eff|
        xg, wg = np.polynomial.legendre.leggauss(_PERIODIC_CORR_ORDER)
        half = 0.5 * (hi - lo)
        tg = 0.5 * (lo + hi) + half * xg[None, :]  # (n_valid, G)
        gap = _periodic_log_gap(
            tg[:, None, :] - s_eff[:, :, None], period
        )  # (n_valid, n_s, G)
        for k in range(d + 1):
            integ = np.einsum(
                "vg,vsg,g->vs", tg**k, gap, wg, optimize=True
            )
            vals[k] += half * integ

    base[:, valid, :] = vals
    return base


def _moment_table(basis: BasisSpec, s_arr, periodic: bool,
                  max_power: int = 0) -> np.ndarray:
    """I_q(B_j, s) = integral of B_j(t) t^q ln(dist(t, s)) dt at full degree,
    q = 0..max_power, via the degree-raising recursion; shape
    (max_power+1, nplain, n_s).  No cyclic folding."""
    knots = basis.knots
    d = basis.degree
    table = _base_log_moments(basis, s_arr, periodic, max_power)
    for r in range(1, d + 1):
        nj = table.shape[1] - 1
        prev = table
        new = np.zeros((d - r + 1 + max_power, nj, len(s_arr)))
        d1 = knots[r : r + nj] - knots[:nj]
        d2 = knots[r + 1 : r + 1 + nj] - knots[1 : 1 + nj]
        m1 = d1 > 0
        m2 = d2 > 0
        inv1 = np.zeros(nj)
        inv2 = np.zeros(nj)
        inv1[m1] = 1.0 / d1[m1]
        inv2[m2] = 1.0 / d2[m2]
        tj = knots[:nj, None]
        tjr1 = knots[r + 1 : r + 1 + nj, None]
        for q in range(d - r + 1 + max_power):
            new[q] = (prev[q + 1, :-1] - tj * prev[q, :-1]) * inv1[:, None] + (
                tjr1 * prev[q, 1:] - prev[q + 1, 1:]
            ) * inv2[:, None]
        table = new
    return table[:, : basis.nplain, :]


def modified_moments(exactness, s, periodic=None) -> np.ndarray:
    """Moments mu_j(s) = integral of B_j(t) ln|t - s| over the domain,
    for every exactness function j, via the degree-raising recursion.

    ``exactness`` is a BasisSpec (or a RefinedBasis, whose basis is used).
    On closed bases (or with ``periodic=True``) the weight is the periodic
    log distance.  Returns an array of shape (dim, n_s).
    """
    basis = exactness.basis if isinstance(exactness, RefinedBasis) else exactness
    if periodic is None:
        periodic = basis.closed
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    mu_plain = _moment_table(basis, s_arr, periodic)[0]
    if basis.closed:
        dim = basis.dim
        mu = mu_plain[:dim].copy()
        mu[: basis.nplain - dim] += mu_plain[dim:]
        return mu
    return mu_plain


# -- element-pair double log moments ---------------------------------------

# Gauss order for pair moments of well-separated elements (and for the
# analytic periodic correction on closed domains); the integrand is analytic
# in a Bernstein ellipse of radius > 3, so this is far beyond machine
# precision already.
_PAIR_FAR_ORDER = 30


def _pair_log_moments_closed(da, db, he, hf, delta):
    """Exact double log moments of monomials centred on each element.

    Computes M[k, a, b] = int_{-he/2}^{he/2} int_{-hf/2}^{hf/2}
    u^a v^b ln|v - u - delta| dv du for a = 0..da, b = 0..db, where
    ``delta`` is the outer-element centre minus the inner-element centre
    (so ``v - u - delta`` is the global difference of the two parameters).
    Centred monomials keep the companion interpolation problem well
    conditioned.  All inputs broadcast to a common leading axis.
    """
    he, hf, delta = np.broadcast_arrays(
        np.asarray(he, dtype=float), np.asarray(hf, dtype=float),
        np.asarray(delta, dtype=float))
    n = he.shape[0]
    out = np.zeros((n, da + 1, db + 1))
    half_e = 0.5 * he
    pmax = da + db + 1
    for sgn in (1.0, -1.0):
        xi = sgn * 0.5 * hf
        z1 = xi - delta - half_e
        z2 = xi - delta + half_e
        llog = [log_power_integral(p, z1, z2) for p in range(pmax + 1)]
        lpow = [(z2 ** (p + 1) - z1 ** (p + 1)) / (p + 1)
                for p in range(pmax + 1)]
        for b in range(db + 1):
            for m in range(b + 1):
                cm = sgn * comb(b, m) / (m + 1)
                for a in range(da + 1):
                    acc = np.zeros(n)
                    for r in range(a + 1):
                        for q in range(b - m + 1):
                            p = r + q + m + 1
                            coef = (cm * comb(a, r) * comb(b - m, q)
                                    * (-1.0) ** (r + q)
                                    * (xi - delta) ** (a - r)
                                    * xi ** (b - m - q))
                            acc += coef * (llog[p] - lpow[p] / (m + 1))
                    out[:, a, b] += acc
    return out


def _pair_log_moments_gauss(da, db, he, hf, delta, order=_PAIR_FAR_ORDER,
                            period=None, gap_only=False):
    """Gauss tensor rule for the same centred pair moments, for element
    pairs whose kernel is analytic (well separated, or the smooth periodic
    correction ``gap_only=True`` of the closed-domain weight)."""
    he = np.asarray(he, dtype=float)[:, None, None]
    hf = np.asarray(hf, dtype=float)[:, None, None]
    delta = np.asarray(delta, dtype=float)[:, None, None]
    x, w = gauss_legendre(order, (-0.5, 0.5))
    u = he * x[None, :, None]
    v = hf * x[None, None, :]
    arg = v - u - delta
    if gap_only:
        kern = _periodic_log_gap(arg, period)
    else:
        kern = np.log(np.abs(arg))
        if period is not None:
            kern += _periodic_log_gap(arg, period)
    n = u.shape[0]
    out = np.empty((n, da + 1, db + 1))
    for a in range(da + 1):
        wa = (he[:, :, 0] ** (a + 1)) * (w * x ** a)[None, :]
        for b in range(db + 1):
            wb = (hf[:, 0, :] ** (b + 1)) * (w * x ** b)[None, :]
            out[:, a, b] = np.einsum("ng,ngh,nh->n", wa, kern, wb)
    return out


@lru_cache(maxsize=32)
def _unit_pair_stack(row_degree: int, col_degree: int, nel: int,
                     closed: bool) -> np.ndarray:
    """Gap-indexed pair moment tables on the unit-width mesh.

    Entry [k, a, b] is the centred moment of two unit elements at integer
    gap k (minimum image on closed meshes, where the weight also carries
    the periodic correction of period ``nel``).  Cached: the stack is
    h-independent, the scaling law lives in ``uniform_pair_log_moments``.
    """
    if closed:
        ks = np.arange(nel)
        keff = ks - nel * np.round(ks / nel)
    else:
        keff = np.arange(-(nel - 1), nel).astype(float)
    delta = -keff
    ones = np.ones(len(keff))
    near = np.abs(keff) <= 1
    m2 = np.empty((len(keff), row_degree + 1, col_degree + 1))
    m2[near] = _pair_log_moments_closed(row_degree, col_degree, ones[near],
                                        ones[near], delta[near])
    m2[~near] = _pair_log_moments_gauss(row_degree, col_degree, ones[~near],
                                        ones[~near], delta[~near])
    if closed:
        m2 += _pair_log_moments_gauss(row_degree, col_degree, ones, ones,
                                      delta, period=float(nel),
                                      gap_only=True)
    m2.setflags(write=False)
    return m2


def uniform_pair_log_moments(basis: BasisSpec, row_degree: int):
    """Double log moments for every element pair of a uniform mesh.

    On a uniform mesh the pair moment depends only on the element gap, so
    one stack of 2*n_el - 1 (open) or n_el (closed, minimum-image) tables
    covers all pairs; the stack itself is computed at unit element width
    (cached) and rescaled via
    M_h[a, b] = h^(a+b+2) (M_1[a, b] + ln(h) c_a c_b), with c_p the
    centred monomial integral.  Returns ``(m2, kmap)`` where ``m2[k, a, b]``
    holds the centred moments of gap ``k`` (outer power a up to
    ``row_degree``, inner power b up to the basis degree) and ``kmap[e, f]``
    maps an element pair to its stack index.  The weight is ln of the plain
    (open) or periodic (closed) distance.
    """
    nel = basis.n_elements
    widths = basis.elements[:, 1] - basis.elements[:, 0]
    h = widths.mean()
    if not np.allclose(widths, h, rtol=_DEDUP_RTOL):
        raise ConstructionError(
            "pair log moments require a uniform element mesh")
    d = basis.degree
    unit = _unit_pair_stack(row_degree, d, nel, basis.closed)
    pa = np.arange(row_degree + 1)
    pb = np.arange(d + 1)
    # centred monomial integrals over one unit element (zero for odd powers)
    ca = np.where(pa % 2 == 0, 0.5 ** pa / (pa + 1.0), 0.0)
    cb = np.where(pb % 2 == 0, 0.5 ** pb / (pb + 1.0), 0.0)
    scale = h ** (2.0 + pa[:, None] + pb[None, :])
    m2 = scale[None] * (unit + np.log(h) * (ca[:, None] * cb[None, :]))
    e_idx = np.arange(nel)
    diff = e_idx[None, :] - e_idx[:, None]
    kmap = np.mod(diff, nel) if basis.closed else diff + (nel - 1)
    return m2, kmap


# -- rule construction -----------------------------------------------------


def build_regular_rules(refined: RefinedBasis, nodes: NodeVector):
    """One weighted rule per parent basis function (weight = that function),
    exact on every refined function whose support meets the weight's.

    The active nodes of rule i are those inside the weight's support; when
    the local system is underdetermined the minimum Euclidean norm weights
    are taken.
    """
    _check_provenance(refined, nodes)
    parent = refined.parent
    fine = refined.basis
    bbar = collocation_matrix(fine, nodes.nodes)
    bpar = collocation_matrix(parent, nodes.nodes)
    rules = []
    for i in range(parent.dim):
        nsel = np.flatnonzero(bpar[i] != 0.0)
        jsel = active_functions(fine, support(parent, i))
        mu = weighted_basis_integrals(refined, i)[jsel]
        local = bbar[np.ix_(jsel, nsel)]
        w, _, rank, _ = scipy.linalg.lstsq(local, mu, lapack_driver="gelsd")
        if rank < len(jsel):
            raise ConstructionError(
                f"rank-deficient local collocation matrix for weight {i}"
            )
        resid = np.linalg.norm(local @ w - mu)
        if resid > EXACTNESS_TOL:
            raise ConstructionError(
                f"regular rule {i} exactness residual {resid:.2e}"
            )
        rules.append(WeightedRule(tag=("basis", i), idx=nsel, weights=w))
    return rules


def build_singular_rules(refined: RefinedBasis, nodes: NodeVector, sigma,
                         periodic=None):
    """One weighted rule per abscissa: weight ln|t - s| at s = sigma_nu
    (periodic log distance on closed bases), exact on all refined functions.

    The rectangular collocation matrix is factorized once (QR of its
    transpose gives the minimum-norm solution) and reused for every abscissa.
    """
    _check_provenance(refined, nodes)
    fine = refined.basis
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    bbar = collocation_matrix(fine, nodes.nodes)
    q_fac, r_fac = scipy.linalg.qr(bbar.T, mode="economic")
    diag = np.abs(np.diag(r_fac))
    if diag.min() <= _RANK_RTOL * diag.max():
        raise ConstructionError("rank-deficient collocation matrix")
    mom = modified_moments(fine, sigma, periodic=periodic)
    y = scipy.linalg.solve_triangular(r_fac.T, mom, lower=True)
    w_all = q_fac @ y  # (n_quad, n_sigma)
    resid = np.abs(bbar @ w_all - mom).max()
    if resid > EXACTNESS_TOL:
        raise ConstructionError(
            f"singular rule exactness residual {resid:.2e}"
        )
    idx = np.arange(nodes.n)
    return [
        WeightedRule(tag=("log", float(sv)), idx=idx, weights=w_all[:, k])
        for k, sv in enumerate(sigma)
    ]


def _check_provenance(refined: RefinedBasis, nodes: NodeVector):
    if nodes.refined is not refined and not np.array_equal(
        nodes.refined.basis.knots, refined.basis.knots
    ):
        raise ConstructionError("node vector built for a different refinement")


def quad_error_ERR(rules, nodes: NodeVector, v, exact_values) -> float:
    """Aggregate relative error of a singular rule family over its abscissae:
    sum (Q - I)^2 / sum Q^2 (a squared-ratio metric, reported as such)."""
    fvals = np.asarray(v(nodes.nodes), dtype=float)
    approx = np.array([rule.apply(fvals) for rule in rules])
    exact = np.asarray(exact_values, dtype=float)
    denom = float(np.sum(approx**2))
    if denom == 0.0:
        raise MetricError("aggregate quadrature error undefined: zero denominator")
    return float(np.sum((approx - exact) ** 2) / denom)
