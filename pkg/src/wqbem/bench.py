"""Benchmark drivers: single solves, convergence sweeps, quadrature-error
sweeps, and CSV / SVG report emission.

Everything here is deterministic: no randomness, fixed sweep orders, and
every CSV row carries the full configuration that produced it.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import (
    assemble_b1,
    assemble_b2,
    assemble_baseline_matrix,
    assemble_weighted_matrix,
    build_discretization,
    scale_and_symmetrize,
)
from .errors import UsageError
from .problems import Problem, define_problem
from .quadrature import (
    build_nodes,
    build_singular_rules,
    modified_moments,
    monomial_log_moment,
    quad_error_ERR,
    rules_matrix,
)
from .solver import (
    BoundarySolution,
    condition_number,
    error_metrics,
    solve_system,
)
from .splines import collocation_matrix, make_open_basis, refine_uniform

__all__ = [
    "RunConfig",
    "run_solve",
    "run_convergence",
    "run_quad_bench",
    "write_csv",
    "write_convergence_svg",
    "QUAD_FAMILIES",
]

STRATEGIES = ("weighted", "element")


@dataclass(frozen=True)
class RunConfig:
    """One solve: problem, discretization and assembly strategy."""

    problem: str
    degree: int
    nh: int
    nref: int = 1
    strategy: str = "weighted"
    ng: int = 12  # baseline far-pair Gauss order

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError(
                f"unknown strategy '{self.strategy}'; "
                f"expected one of {STRATEGIES}"
            )
        if self.degree < 1:
            raise UsageError("degree must be >= 1")
        if self.nh < 1 or self.nref < 1:
            raise UsageError("nh and nref must be >= 1")


def _assemble(config: RunConfig, prob: Problem):
    space = prob.make_space(config.degree, config.nh)
    if config.strategy == "weighted":
        disc = build_discretization(prob.curve, space, config.nref)
        m, counters, seconds = assemble_weighted_matrix(disc)
        counters = dict(counters)
        counters["rule_seconds"] = disc.rule_seconds
        nodes = disc.nodes.n
    else:
        m, counters, seconds = assemble_baseline_matrix(
            prob.curve, space, ng=config.ng
        )
        counters = dict(counters)
        counters["kernel_evals"] = counters["kernel_evals_far"]
        nodes = 0
    return space, m, counters, seconds, nodes


def run_solve(config: RunConfig, dump_rules: bool = False) -> dict:
    """Assemble, solve and measure one configuration; returns a flat row."""
    prob = define_problem(config.problem)
    space, m, counters, seconds, nodes = _assemble(config, prob)
    a, defect = scale_and_symmetrize(m)
    t0 = time.perf_counter()
    rhs = assemble_b1(prob.curve, space, prob.dirichlet)
    if prob.formulation == "direct":
        rhs = 0.5 * rhs + assemble_b2(prob.curve, space, prob.dirichlet)
    rhs_seconds = time.perf_counter() - t0
    alpha = solve_system(a, rhs)
    sol = BoundarySolution(prob.curve, space, alpha, prob.formulation)
    report = error_metrics(sol, prob.exact_density)
    row = {
        **asdict(config),
        "dof": space.dim,
        "n_quad": nodes,
        "cond": condition_number(a),
        "e_r": report.e_r,
        "e_m": report.e_m,
        "symmetry_defect": defect,
        "assembly_seconds": seconds,
        "rhs_seconds": rhs_seconds,
        "kernel_evals": counters["kernel_evals"],
    }
    if config.strategy == "element":
        row["far_pairs"] = counters["far_pairs"]
    if dump_rules and config.strategy == "weighted":
        disc = build_discretization(prob.curve, space, config.nref)
        row["rules"] = {
            "nodes": disc.nodes.nodes.tolist(),
            "regular_weights": rules_matrix(
                disc.regular_rules, disc.nodes.n
            ).tolist(),
            "singular_weights": rules_matrix(
                disc.singular_rules, disc.nodes.n
            ).tolist(),
        }
    return row


def run_convergence(problem: str, degrees, nhs, nref: int,
                    strategies=("weighted",), ng: int = 12) -> list[dict]:
    """Sweep (strategy, degree, N_h) in a deterministic order."""
    rows = []
    for strategy in strategies:
        for d in degrees:
            for nh in nhs:
                cfg = RunConfig(problem=problem, degree=d, nh=nh,
                                nref=nref, strategy=strategy, ng=ng)
                rows.append(run_solve(cfg))
    return rows


# -- quadrature-error benchmark ---------------------------------------------

# Test families for the singular rules: the aggregate error of applying
# every rule of the family to v, against the exact log integrals.  The
# rules are exact on splines of the stated degree; the families probe one
# degree beyond (B-spline and monomial) and an algebraic/square-root
# integrand with a known closed-form log potential.
QUAD_FAMILIES = ("spline", "monomial", "sqrt")


def _quad_family(name: str, degree: int, nh: int):
    """Integrand and exact log potential (as a function of s) of a family."""
    if name == "spline":
        # one interior B-spline of degree d+1 on the same partition
        basis = make_open_basis(degree + 1, np.linspace(-1.0, 1.0, nh + 1))
        j = degree + 1

        def v(t):
            return collocation_matrix(basis, np.atleast_1d(t))[j]

        def exact(s):
            return modified_moments(basis, s)[j]

    elif name == "monomial":
        q = degree + 1

        def v(t):
            return np.asarray(t, dtype=float) ** q

        def exact(s):
            return monomial_log_moment(q, s, -1.0, 1.0)

    elif name == "sqrt":

        def v(t):
            t = np.asarray(t, dtype=float)
            return np.sqrt(np.clip(1.0 - t * t, 0.0, None)) / (t * t + 25.0)

        def exact(s):
            s = np.asarray(s, dtype=float)
            return np.pi * np.log(2.0) + (np.pi * np.sqrt(26.0) / 5.0) * (
                np.log(np.sqrt(25.0 + s * s) / (5.0 + np.sqrt(26.0)))
            )

    else:
        raise UsageError(f"unknown quadrature family '{name}'")
    return v, exact


def quad_family_error(name: str, degree: int, nh: int, nref: int) -> float:
    """Aggregate relative error of the singular rules on one family cell."""
    space = make_open_basis(degree, np.linspace(-1.0, 1.0, nh + 1))
    refined = refine_uniform(space, nref)
    nodes = build_nodes(refined)
    rules = build_singular_rules(refined, nodes, nodes.nodes)
    v, exact = _quad_family(name, degree, nh)
    return quad_error_ERR(rules, nodes, v, exact(nodes.nodes))


def run_quad_bench(degrees, nhs, nref: int = 2,
                   families=QUAD_FAMILIES) -> list[dict]:
    """Quadrature-error table: one row per (family, degree, N_h)."""
    rows = []
    for name in families:
        for d in degrees:
            for nh in nhs:
                rows.append(
                    {
                        "family": name,
                        "degree": d,
                        "nh": nh,
                        "nref": nref,
                        "err": quad_family_error(name, d, nh, nref),
                    }
                )
    return rows


# -- report emission ---------------------------------------------------------


def write_csv(rows: list[dict], path) -> None:
    """All keys present in any row become columns (missing -> empty)."""
    if not rows:
        raise UsageError("no rows to write")
    fields = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: json.dumps(v) if isinstance(v, (dict, list)) else v
                    for k, v in row.items()
                }
            )


def write_convergence_svg(rows: list[dict], path, x_key: str = "dof",
                          y_key: str = "e_r") -> None:
    """Minimal dependency-free log-log SVG plot, one polyline per
    (strategy, degree) group."""
    groups: dict[tuple, list] = {}
    for row in rows:
        if row.get(y_key, 0) <= 0 or row.get(x_key, 0) <= 0:
            continue
        groups.setdefault((row["strategy"], row["degree"]), []).append(
            (row[x_key], row[y_key])
        )
    if not groups:
        raise UsageError("no positive data to plot")
    w, h, margin = 640, 480, 60
    xs = np.log10([x for pts in groups.values() for x, _ in pts])
    ys = np.log10([y for pts in groups.values() for _, y in pts])
    x0, x1 = xs.min(), max(xs.max(), xs.min() + 1e-9)
    y0, y1 = ys.min(), max(ys.max(), ys.min() + 1e-9)

    def to_px(x, y):
        px = margin + (np.log10(x) - x0) / (x1 - x0) * (w - 2 * margin)
        py = h - margin - (np.log10(y) - y0) / (y1 - y0) * (h - 2 * margin)
        return px, py

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w // 2}" y="{h - 15}" text-anchor="middle" '
        f'font-size="14">log10 {x_key}</text>',
        f'<text x="18" y="{h // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {h // 2})">log10 {y_key}</text>',
    ]
    for k, (key, pts) in enumerate(sorted(groups.items())):
        pts = sorted(pts)
        color = palette[k % len(palette)]
        coords = " ".join(
            f"{px:.1f},{py:.1f}" for px, py in (to_px(x, y) for x, y in pts)
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{w - margin + 5}" y="{margin + 18 * k}" fill="{color}"'
            f' font-size="12">{key[0]} d={key[1]}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
