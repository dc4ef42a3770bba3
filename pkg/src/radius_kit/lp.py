"""Linear programs over consistency sets.

The LP engine is HiGHS' dual simplex through :func:`scipy.optimize.linprog`;
it returns basic (vertex) solutions and is deterministic for a fixed input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, linprog

from .errors import Infeasible, NumericalFailure, Unbounded, UnsupportedNorm
from .model import (
    HPolytope,
    NormP,
    ProblemInstance,
    consistency_ellipsoid,
    consistency_polytope,
)

FEAS_TOL = 1e-9
OPT_TOL = 1e-9

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": FEAS_TOL,
    "dual_feasibility_tolerance": OPT_TOL,
}


@dataclass(frozen=True)
class LpProblem:
    """minimize ``objective @ x`` subject to ``x`` in ``constraints``."""

    objective: np.ndarray
    constraints: HPolytope


@dataclass(frozen=True)
class BoxSummary:
    lower: np.ndarray
    upper: np.ndarray

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def _linprog(c, a_ub, b_ub, a_eq=None, b_eq=None):
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=(None, None), method="highs-ds", options=_HIGHS_OPTIONS,
    )
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status == 3:
        raise Unbounded(res.message)
    if res.status != 0:
        raise NumericalFailure(f"LP solver failed: {res.message}", iterate=getattr(res, "x", None))
    return res.x, float(res.fun)


def solve_lp(p: LpProblem) -> tuple[np.ndarray, float]:
    c = np.asarray(p.objective, dtype=float)
    return _linprog(c, p.constraints.a_matrix, p.constraints.b_vector)


def chebyshev_center(poly: HPolytope) -> tuple[np.ndarray, float]:
    """Center and radius of the largest Euclidean ball inside ``poly``."""
    a, b = poly.a_matrix, poly.b_vector
    norms = np.linalg.norm(a, axis=1)
    a_aug = np.hstack([a, norms[:, None]])
    c = np.zeros(a.shape[1] + 1)
    c[-1] = -1.0
    # cap the radius so unbounded polytopes still yield a center
    a_aug = np.vstack([a_aug, np.eye(1, a.shape[1] + 1, a.shape[1])])
    b_aug = np.concatenate([b, [1e12]])
    x, _ = _linprog(c, a_aug, b_aug)
    if x[-1] < -FEAS_TOL:
        # a negative radius certifies that the halfspaces do not intersect
        raise Infeasible("polytope is empty")
    return x[:-1], float(x[-1])


def has_interior(poly: HPolytope) -> bool:
    try:
        _, radius = chebyshev_center(poly)
    except Infeasible:
        return False
    return radius > FEAS_TOL


def direction_bounds(poly: HPolytope, directions: np.ndarray) -> BoxSummary:
    """Min and max of each ``directions[i] @ x`` over ``poly``."""
    directions = np.atleast_2d(directions)
    lower = np.empty(directions.shape[0])
    upper = np.empty(directions.shape[0])
    for i, d in enumerate(directions):
        _, lower[i] = _linprog(d, poly.a_matrix, poly.b_vector)
        _, neg = _linprog(-d, poly.a_matrix, poly.b_vector)
        upper[i] = -neg
    return BoxSummary(lower, upper)


def coordinate_bounds(poly: HPolytope, coords) -> BoxSummary:
    coords = list(coords)
    return direction_bounds(poly, np.eye(poly.dim)[coords])


def worst_case_box(inst: ProblemInstance) -> tuple[np.ndarray, float, BoxSummary]:
    """Tightest box around ``S K``; its midpoint is the l-infinity central estimate."""
    if inst.norm_p is not NormP.INF:
        raise UnsupportedNorm("worst_case_box is defined for l-infinity norms")
    box = direction_bounds(consistency_polytope(inst), inst.solution_matrix)
    return box.midpoint, float(np.max(box.halfwidth)), box


# --- norm-generic helpers used by the estimators -----------------------------

def _lifted_constraints(inst: ProblemInstance):
    """Consistency set as ``A v <= b`` over ``v = (x, aux)``; returns (A, b, n_vars)."""
    info, y, rho = inst.info_matrix, inst.data, inst.noise_radius
    m, n = info.shape
    if inst.norm_p is NormP.INF:
        poly = consistency_polytope(inst)
        return poly.a_matrix, poly.b_vector, n
    if inst.norm_p is NormP.ONE:
        eye = np.eye(m)
        a = np.block([
            [info, -eye],
            [-info, -eye],
            [np.zeros((1, n)), np.ones((1, m))],
        ])
        b = np.concatenate([y, -y, [rho]])
        return a, b, n + m
    raise UnsupportedNorm("l2 consistency sets are handled in closed form")


def consistency_extent(inst: ProblemInstance, directions: np.ndarray) -> BoxSummary:
    """Range of ``directions @ x`` over the consistency set, any supported norm."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if inst.norm_p is NormP.TWO:
        center, shape = consistency_ellipsoid(inst)
        cov = np.linalg.inv(shape)
        mid = directions @ center
        half = np.sqrt(np.einsum("ij,jk,ik->i", directions, cov, directions))
        return BoxSummary(mid - half, mid + half)
    if inst.norm_p is NormP.INF:
        return direction_bounds(consistency_polytope(inst), directions)
    a, b, nv = _lifted_constraints(inst)
    pad = np.zeros((directions.shape[0], nv - inst.n))
    return direction_bounds(HPolytope(a, b), np.hstack([directions, pad]))


def _ellipsoid_image(inst: ProblemInstance):
    center, shape = consistency_ellipsoid(inst)
    sol = inst.solution_matrix
    return sol @ center, sol @ np.linalg.inv(shape) @ sol.T


def _ellipsoid_distance(z: np.ndarray, center: np.ndarray, shape_cov: np.ndarray) -> float:
    """Euclidean distance from ``z`` to ``{c + M^{1/2} u : ||u|| <= 1}``."""
    evals, evecs = np.linalg.eigh(shape_cov)
    d = evecs.T @ (np.asarray(z, dtype=float) - center)
    if np.sum(d * d / evals) <= 1.0:
        return 0.0

    def excess(lam):
        return np.sum(d * d * evals / (evals + lam) ** 2) - 1.0

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    lam = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return float(np.sqrt(np.sum((d * lam / (evals + lam)) ** 2)))


def distance_to_image(inst: ProblemInstance, z: np.ndarray) -> float:
    """``min ||S x - z||_p`` over the consistency set."""
    z = np.asarray(z, dtype=float)
    if inst.norm_p is NormP.TWO:
        center, cov = _ellipsoid_image(inst)
        return _ellipsoid_distance(z, center, cov)
    a, b, nv = _lifted_constraints(inst)
    sol = inst.solution_matrix
    s = sol.shape[0]
    k = a.shape[0]
    sol_pad = np.hstack([sol, np.zeros((s, nv - inst.n))])
    if inst.norm_p is NormP.INF:
        # variables (v, t): |S x - z|_i <= t
        a_full = np.block([
            [a, np.zeros((k, 1))],
            [sol_pad, -np.ones((s, 1))],
            [-sol_pad, -np.ones((s, 1))],
        ])
        c = np.zeros(nv + 1)
        c[-1] = 1.0
    else:
        # variables (v, u): |S x - z|_i <= u_i, minimize sum u
        eye = np.eye(s)
        a_full = np.block([
            [a, np.zeros((k, s))],
            [sol_pad, -eye],
            [-sol_pad, -eye],
        ])
        c = np.concatenate([np.zeros(nv), np.ones(s)])
    b_full = np.concatenate([b, z, -z])
    _, value = _linprog(c, a_full, b_full)
    return max(value, 0.0)


def meets_cylinder(inst: ProblemInstance, z: np.ndarray, r: float) -> bool:
    """Whether the cylinder of radius ``r`` around ``z`` meets the consistency set."""
    return distance_to_image(inst, z) <= r + FEAS_TOL * max(1.0, r)


def in_image(inst: ProblemInstance, z: np.ndarray, tol: float = 1e-7) -> bool:
    """Whether ``z`` lies in ``S K`` (up to ``tol``)."""
    return distance_to_image(inst, z) <= tol
