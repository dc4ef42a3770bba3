"""Volume of ``K`` intersected with a cylinder around a candidate estimate.

:class:`CylinderOracle` is the randomized oracle: uniform samples in the
bounded cylinder, consistency test, hit fraction times cylinder volume.
:class:`ExactPhi` is an independent deterministic oracle for n <= 3 built on
vertex enumeration of the intersection polytope.
"""

from __future__ import annotations

import itertools
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.stats import beta

from .errors import DimensionTooLarge, EmptyCylinder, Infeasible, UnsupportedNorm
from .lp import consistency_extent
from .model import HPolytope, NormP, RegularizedProblem, lp_norm
from .sampling import BoundedCylinder, cylinder_volume, unit_ball_samples

DEFAULT_DELTA = 0.05


def clopper_pearson(hits: int, total: int, delta: float = DEFAULT_DELTA) -> tuple[float, float]:
    """Exact two-sided binomial interval at level ``1 - delta``."""
    if total <= 0:
        return 0.0, 1.0
    lo = 0.0 if hits == 0 else float(beta.ppf(delta / 2, hits, total - hits + 1))
    hi = 1.0 if hits == total else float(beta.ppf(1 - delta / 2, hits + 1, total - hits))
    return lo, hi


def binomial_halfwidth(hits: int, total: int, delta: float = DEFAULT_DELTA) -> float:
    lo, hi = clopper_pearson(hits, total, delta)
    frac = hits / total
    return max(frac - lo, hi - frac)


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    hit_count: int
    sample_count: int
    confidence_halfwidth: float
    cylinder_volume: float

    @classmethod
    def from_counts(cls, hits: int, total: int, v_c: float, delta: float = DEFAULT_DELTA) -> "VolumeEstimate":
        return cls(
            value=hits / total * v_c,
            hit_count=int(hits),
            sample_count=int(total),
            confidence_halfwidth=binomial_halfwidth(hits, total, delta) * v_c,
            cylinder_volume=v_c,
        )

    @classmethod
    def exact(cls, value: float, v_c: float = float("nan")) -> "VolumeEstimate":
        return cls(value=float(value), hit_count=0, sample_count=0,
                   confidence_halfwidth=0.0, cylinder_volume=v_c)

    def merge(self, other: "VolumeEstimate", delta: float = DEFAULT_DELTA) -> "VolumeEstimate":
        return VolumeEstimate.from_counts(self.hit_count + other.hit_count,
                                          self.sample_count + other.sample_count,
                                          self.cylinder_volume, delta)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "hit_count": self.hit_count,
            "sample_count": self.sample_count,
            "confidence_halfwidth": self.confidence_halfwidth,
            "cylinder_volume": self.cylinder_volume,
        }


class CylinderOracle:
    """Randomized volume oracle bound to one regularized problem.

    The bounding LPs for every coordinate of ``K`` are solved once here; the
    trailing ``n - s`` of them are the free-coordinate bounds of the bounded
    cylinder.  For l-infinity noise, rows that cannot be active anywhere in
    the bounding box are dropped and the box rows take their place, which
    leaves the membership test unchanged.
    """

    def __init__(self, inst: RegularizedProblem):
        self.inst = inst
        base = inst.base
        self.p = base.norm_p
        self.rho = base.noise_radius
        n, s = base.n, base.s
        self.n, self.s = n, s
        try:
            box = consistency_extent(base, np.eye(n))
        except Infeasible as exc:
            raise EmptyCylinder(f"bounding programs infeasible: {exc}") from None
        self.box_lower, self.box_upper = box.lower, box.upper
        self.free_lower = box.lower[s:]
        self.free_upper = box.upper[s:]
        self.s_bar = inst.s_bar
        s_bar_inv = np.linalg.inv(inst.s_bar)
        self.s_bar_inv = s_bar_inv
        info = base.info_matrix

        if self.p is NormP.INF:
            rows = np.vstack([info, -info])
            rhs = np.concatenate([self.rho + base.data, self.rho - base.data])
            pos = np.clip(rows, 0, None)
            neg = np.clip(rows, None, 0)
            box_max = pos @ box.upper + neg @ box.lower
            keep = box_max > rhs
            head_box = np.vstack([np.eye(n)[:s], -np.eye(n)[:s]])
            head_rhs = np.concatenate([box.upper[:s], -box.lower[:s]])
            self.rows = np.vstack([rows[keep], head_box])
            self.rhs = np.concatenate([rhs[keep], head_rhs])
            self.kept_rows = int(keep.sum())
        else:
            self.rows = info
            self.rhs = base.data
            self.kept_rows = info.shape[0]
        # rows @ x_tilde = head_map @ zeta + tail_map @ xi
        self.head_map = self.rows[:, :s] @ s_bar_inv
        self.tail_map = self.rows[:, s:]
        self.free_width = self.free_upper - self.free_lower
        self.tail_offset = self.tail_map @ self.free_lower - self.rhs

    def cylinder(self, z: np.ndarray, r: float) -> BoundedCylinder:
        return BoundedCylinder(z, r, self.s_bar, self.free_lower, self.free_upper, self.p)

    def cylinder_volume(self, r: float) -> float:
        return cylinder_volume(self.cylinder(np.zeros(self.s), r))

    def draw(self, gen: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Unit-ball offsets and unit-cube free coordinates."""
        u = unit_ball_samples(self.s, self.p, gen, count)
        xi = gen.random((count, self.n - self.s))
        return u, xi

    def base_residuals(self, u: np.ndarray, xi: np.ndarray, r: float) -> np.ndarray:
        """Constraint residuals of the samples for a cylinder centered at 0."""
        out = (r * u) @ self.head_map.T
        if xi.shape[1]:
            out += (xi * self.free_width) @ self.tail_map.T
        out += self.tail_offset
        return out

    def hit_mask(self, base: np.ndarray, z: np.ndarray) -> np.ndarray:
        resid = base + self.head_map @ z
        if self.p is NormP.INF:
            return resid.max(axis=1) <= 0.0
        return lp_norm(resid, self.p) <= self.rho

    def count_hits(self, base: np.ndarray, z: np.ndarray) -> int:
        return int(np.count_nonzero(self.hit_mask(base, z)))

    def estimate(self, z, r: float, n_samples: int, gen: np.random.Generator,
                 delta: float = DEFAULT_DELTA, chunk: int = 200_000) -> VolumeEstimate:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        hits = 0
        left = int(n_samples)
        while left > 0:
            k = min(chunk, left)
            u, xi = self.draw(gen, k)
            hits += self.count_hits(self.base_residuals(u, xi, r), z)
            left -= k
        return VolumeEstimate.from_counts(hits, int(n_samples), self.cylinder_volume(r), delta)

    def samples(self, z, r: float, count: int, gen: np.random.Generator) -> np.ndarray:
        """Explicit cylinder samples in regularized coordinates (for inspection/tests)."""
        u, xi = self.draw(gen, count)
        head = (np.asarray(z) + r * u) @ self.s_bar_inv.T
        return np.hstack([head, self.free_lower + xi * self.free_width])


_ORACLES: "weakref.WeakKeyDictionary[RegularizedProblem, CylinderOracle]" = weakref.WeakKeyDictionary()


def cylinder_oracle(inst: RegularizedProblem) -> CylinderOracle:
    oracle = _ORACLES.get(inst)
    if oracle is None:
        oracle = CylinderOracle(inst)
        _ORACLES[inst] = oracle
    return oracle


def estimate_phi(inst: RegularizedProblem, z, r: float, n_samples: int, rng,
                 delta: float = DEFAULT_DELTA) -> VolumeEstimate:
    gen = rng if isinstance(rng, np.random.Generator) else rng.generator()
    return cylinder_oracle(inst).estimate(z, r, n_samples, gen, delta)


# --- exact oracle (n <= 3) ----------------------------------------------------

def _feasible(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    tol = 1e-9 * (1.0 + np.abs(b))
    return np.all(points @ a.T <= b + tol, axis=1)


def _dedupe(points: np.ndarray, scale: float) -> np.ndarray:
    if len(points) == 0:
        return points
    key = np.round(points / (1e-9 * max(scale, 1e-300)))
    _, idx = np.unique(key, axis=0, return_index=True)
    return points[np.sort(idx)]


def polytope_vertices(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vertices of ``{x : a x <= b}`` for dimension 1, 2 or 3."""
    a = np.atleast_2d(a)
    k, dim = a.shape
    if dim > 3:
        raise DimensionTooLarge(f"vertex enumeration supports n <= 3 (got {dim})")
    if dim == 1:
        col = a[:, 0]
        up = b[col > 0] / col[col > 0]
        lo = b[col < 0] / col[col < 0]
        if up.size == 0 or lo.size == 0:
            return np.empty((0, 1))
        lo_v, up_v = lo.max(), up.min()
        if lo_v > up_v:
            return np.empty((0, 1))
        return np.array([[lo_v], [up_v]])
    combos = np.array(list(itertools.combinations(range(k), dim)), dtype=int)
    if combos.size == 0:
        return np.empty((0, dim))
    mats = a[combos]
    rhs = b[combos]
    dets = np.linalg.det(mats)
    row_scale = np.prod(np.linalg.norm(mats, axis=2), axis=1)
    ok = np.abs(dets) > 1e-12 * np.maximum(row_scale, 1e-300)
    if not ok.any():
        return np.empty((0, dim))
    pts = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    pts = pts[_feasible(pts, a, b)]
    scale = float(np.abs(pts).max()) if len(pts) else 1.0
    return _dedupe(pts, max(scale, 1.0))


def _order_polygon(vertices: np.ndarray) -> np.ndarray:
    c = vertices.mean(axis=0)
    ang = np.arctan2(vertices[:, 1] - c[1], vertices[:, 0] - c[0])
    return vertices[np.argsort(ang)]


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip(poly: list, a: np.ndarray, b: float) -> list:
    """Sutherland-Hodgman clip of a convex polygon by ``a x <= b``."""
    if not poly:
        return poly
    out = []
    vals = [float(a @ p) - b for p in poly]
    count = len(poly)
    for i in range(count):
        p, q = poly[i], poly[(i + 1) % count]
        dp, dq = vals[i], vals[(i + 1) % count]
        if dp <= 0:
            out.append(p)
        if (dp < 0 < dq) or (dq < 0 < dp):
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    return out


def _hull_volume(points: np.ndarray) -> float:
    dim = points.shape[1]
    if len(points) <= dim:
        return 0.0
    if dim == 1:
        return float(points.max() - points.min())
    if dim == 2:
        return _polygon_area(_order_polygon(points))
    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        return 0.0


def polytope_volume(poly: HPolytope) -> float:
    return _hull_volume(polytope_vertices(poly.a_matrix, poly.b_vector))


def cylinder_halfspaces(solution_matrix: np.ndarray, z, r: float, p: NormP) -> HPolytope:
    """``{x : ||S x - z||_p <= r}`` as halfspaces (p in {one, inf})."""
    sol = np.atleast_2d(solution_matrix)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    p = NormP.parse(p)
    if p is NormP.INF:
        return HPolytope(np.vstack([sol, -sol]), np.concatenate([r + z, r - z]))
    if p is NormP.ONE:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=sol.shape[0])))
        return HPolytope(signs @ sol, r + signs @ z)
    raise UnsupportedNorm("exact oracle requires a polytopic cylinder (p = one or inf)")


class ExactPhi:
    """Exact ``vol(K ∩ C(z, r))`` for ``K`` given as halfspaces in dimension <= 3."""

    def __init__(self, poly: HPolytope, solution_matrix=None, p=NormP.INF):
        dim = poly.dim
        if dim > 3:
            raise DimensionTooLarge(f"exact oracle supports n <= 3 (got {dim})")
        self.dim = dim
        self.p = NormP.parse(p)
        if self.p is NormP.TWO:
            raise UnsupportedNorm("exact oracle requires p = one or inf")
        self.solution_matrix = np.eye(dim) if solution_matrix is None else np.atleast_2d(solution_matrix)
        verts = polytope_vertices(poly.a_matrix, poly.b_vector)
        self.k_vertices = verts
        self.volume_k = _hull_volume(verts)
        if dim == 2 and len(verts) >= 3:
            self._polygon = [v for v in _order_polygon(verts)]
        else:
            self._polygon = None
        # keep only rows that support at least ``dim`` vertices
        a, b = poly.a_matrix, poly.b_vector
        if len(verts):
            tight = np.abs(verts @ a.T - b) <= 1e-9 * (1.0 + np.abs(b))
            keep = tight.sum(axis=0) >= dim
            self.rows, self.rhs = a[keep], b[keep]
        else:
            self.rows, self.rhs = a, b

    def __call__(self, z, r: float) -> float:
        if self.volume_k == 0.0 or r <= 0:
            return 0.0
        cyl = cylinder_halfspaces(self.solution_matrix, z, r, self.p)
        if self._polygon is not None:
            poly = self._polygon
            for a_row, b_val in zip(cyl.a_matrix, cyl.b_vector):
                poly = _clip(poly, a_row, b_val)
                if len(poly) < 3:
                    return 0.0
            return _polygon_area(np.array(poly))
        a = np.vstack([self.rows, cyl.a_matrix])
        b = np.concatenate([self.rhs, cyl.b_vector])
        return _hull_volume(polytope_vertices(a, b))


def exact_phi_2d3d(poly: HPolytope, z, r: float, p=NormP.INF, solution_matrix=None) -> float:
    return ExactPhi(poly, solution_matrix, p)(z, r)
