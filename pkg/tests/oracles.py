"""Independent reference computations for the test suite.

Everything here is deliberately written from the mathematical definitions
(adaptive quadrature, explicit nested loops) without reusing the package's
fast paths, so agreement is meaningful evidence and not a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from wqbem.geometry import KernelSplit, parametric_speed
from wqbem.quadrature import modified_moments, rules_matrix
from wqbem.splines import collocation_matrix, eval_basis, support

QUAD_KW = dict(limit=400, epsabs=1e-13, epsrel=1e-13)


def adaptive_integral(f, lo, hi, points=()):
    """Adaptive integral with interior split points (singularities/kinks)."""
    cuts = sorted({lo, hi, *[p for p in points if lo < p < hi]})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = quad(f, a, b, **QUAD_KW)
        total += val
    return total


def log_weight(t, s, periodic=False, period=None):
    """The singular weight: ln|t - s|, or its periodic counterpart
    ln((L/pi)|sin(pi (t - s)/L)|) on closed domains."""
    if periodic:
        return np.log((period / np.pi) * np.abs(np.sin(np.pi * (t - s) / period)))
    return np.log(np.abs(t - s))


def adaptive_log_moment(g, s, lo, hi, periodic=False, period=None):
    """integral of g(t) * log-weight(t, s) dt, split at the singularity."""
    def f(t):
        return g(t) * log_weight(t, s, periodic, period)

    pts = [s]
    if periodic:
        # the periodic weight is singular at every image of s
        pts = [s + k * period for k in range(-2, 3)]
    return adaptive_integral(f, lo, hi, points=pts)


def basis_fn(basis, j):
    """Scalar-argument evaluator of one logical basis function."""

    def g(t):
        idx, vals = eval_basis(basis, float(t))
        sel = idx == j
        return float(vals[sel].sum()) if sel.any() else 0.0

    return g


# -- naive (loop-based) references for the sum-factorized assembly ---------


def naive_ik1(disc):
    """Quadruple loop over (i, n1, j, n2) from the entry definition
    entry(i,j) = sum_n1 w_i[n1] J[n1] sum_n2 w_j[n2] J[n2] K1(eta_n1, eta_n2).
    """
    ks = KernelSplit(disc.curve)
    eta = disc.nodes.nodes
    jn = parametric_speed(disc.curve, eta)
    w = rules_matrix(disc.regular_rules, disc.nodes.n)
    dim, nq = w.shape
    k1 = np.array([[ks.K1(eta[n1], eta[n2]) for n2 in range(nq)]
                   for n1 in range(nq)])
    out = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(dim):
            acc = 0.0
            for n1 in range(nq):
                if w[i, n1] == 0.0:
                    continue
                inner = 0.0
                for n2 in range(nq):
                    inner += w[j, n2] * jn[n2] * k1[n1, n2]
                acc += w[i, n1] * jn[n1] * inner
            out[i, j] = acc
    return out


def _graded(lo, hi, order, levels=12, ratio=0.3):
    """Composite Gauss on [lo, hi], panels shrinking toward both endpoints
    (kinks of the log potentials sit on element boundaries)."""
    x, wg = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (lo + hi)
    cuts = (mid - lo) * ratio ** np.arange(levels + 1)
    edges = np.concatenate([[lo], (lo + cuts)[::-1],
                            (hi - cuts), [hi]])
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        pts.append(0.5 * (a + b) + half * x)
        wts.append(half * wg)
    return np.concatenate(pts), np.concatenate(wts)


def naive_ik2(disc):
    """Entry-by-entry reference of the log-part operator
    Theta C + (Theta C)^T - C^T D C  (the operator the fast path assembles),
    with every ingredient recomputed independently:

    * C: least-squares fit of B_i J at the nodes, via numpy gelsd;
    * Theta[i, l] = integral of B_i(s) J(s) mu_l(s) ds with mu_l the exact
      log moment of refined function l, outer integral by composite Gauss
      graded into every refined element's endpoints;
    * D[l, m] = integral of B_l(s) mu_m(s) ds likewise.

    The pair-moment tables, scaling law, and scatter logic of the fast path
    are not used anywhere here.
    """
    fine = disc.refined.basis
    space = disc.space
    eta = disc.nodes.nodes
    jac = parametric_speed(disc.curve, eta)
    bbar_t = collocation_matrix(fine, eta).T          # (n_q, fine.dim)
    bpar_t = collocation_matrix(space, eta).T         # (n_q, dim)
    cfit, *_ = np.linalg.lstsq(bbar_t, bpar_t * jac[:, None], rcond=None)

    pts, wts = [], []
    for lo, hi in fine.elements:
        p, w = _graded(lo, hi, 14)
        pts.append(p)
        wts.append(w)
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    mu = modified_moments(fine, pts)                  # (fine.dim, n_pts)
    jpts = parametric_speed(disc.curve, pts)
    bs = collocation_matrix(space, pts)               # (dim, n_pts)
    bf = collocation_matrix(fine, pts)                # (fine.dim, n_pts)

    dim, fdim = space.dim, fine.dim
    theta = np.zeros((dim, fdim))
    for i in range(dim):
        for ell in range(fdim):
            theta[i, ell] = np.sum(wts * bs[i] * jpts * mu[ell])
    dmat = np.zeros((fdim, fdim))
    for ell in range(fdim):
        for mth in range(fdim):
            dmat[ell, mth] = np.sum(wts * bf[ell] * mu[mth])

    out = np.zeros((dim, dim))
    tc = theta @ cfit
    for i in range(dim):
        for j in range(dim):
            out[i, j] = tc[i, j] + tc[j, i] - cfit[:, i] @ dmat @ cfit[:, j]
    return out


def naive_galerkin_log(curve, space, order=12):
    """Direct Galerkin matrix of the full kernel ln||f(s) - f(t)|| by
    element-pair integration: adaptive inner integral (singularity split)
    under a graded outer rule.  Slow; only for tiny cases."""
    ks = KernelSplit(curve)
    jfun = lambda t: float(parametric_speed(curve, t))
    dim = space.dim
    out = np.zeros((dim, dim))
    gfuns = [basis_fn(space, j) for j in range(dim)]
    for i in range(dim):
        sup_i = support(space, i)
        for j in range(dim):
            total = 0.0
            for lo, hi in sup_i:
                s_pts, s_wts = _graded(lo, hi, 10, levels=8)
                for s, w in zip(s_pts, s_wts):
                    def f(t):
                        return gfuns[j](t) * jfun(t) * float(ks.K(s, t))
                    inner = 0.0
                    for a, b in support(space, j):
                        inner += adaptive_integral(f, a, b, points=[s])
                    total += w * gfuns[i](s) * jfun(s) * inner
            out[i, j] = total
    return out
