"""Optimal violation function and probabilistic radius of information.

For a radius ``r`` the best center maximizes the volume of ``K`` inside the
cylinder ``C(z, r)``; ``v(r) = 1 - phi_max(r) / vol(K)``.  The probabilistic
radius at level ``eps`` is the smallest ``r`` with ``v(r) <= eps`` and is found
by bisection on ``[0, r_wc]``.

Centers are searched with SPSA on the randomized oracle (both evaluations of
an iteration share their samples), or on the exact oracle when ``n <= 3``.
"""

from __future__ import annotations

import enum
import logging
import math
import weakref
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import EmptyCylinder, EmptyH, Infeasible, InvalidEpsilon, InvalidInstance, UnsupportedNorm
from .gaussian import least_squares
from .lp import (
    BoxSummary,
    chebyshev_center,
    consistency_extent,
    distance_to_image,
    in_image,
    worst_case_box,
)
from .model import (
    NormP,
    ProblemInstance,
    RegularizedProblem,
    consistency_ellipsoid,
    consistency_polytope,
    regularize,
)
from .parallel import parallel_map
from .sampling import RngStream, lp_ball_volume
from .volume import (
    DEFAULT_DELTA,
    ExactPhi,
    VolumeEstimate,
    binomial_halfwidth,
    cylinder_oracle,
)

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    EXACT = "exact"
    SPSA = "spsa"
    SDP = "sdp"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, Method):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidInstance(f"unknown method {value!r}") from None


ORACLES = ("auto", "cylinder", "pool")


@dataclass(frozen=True)
class SpsaConfig:
    """SPSA gains plus oracle budgets.

    ``a_gain``/``c_gain`` left as ``None`` are calibrated per call: ``c`` is a
    tenth of the cylinder radius and ``a`` makes the first step cover
    ``first_step`` of the worst-case box diameter.

    ``oracle`` picks the randomized volume estimator.  ``cylinder`` samples the
    bounded cylinder.  ``pool`` counts uniform points of ``K`` (the accepted
    draws of the ``vol(K)`` estimate) that land in the cylinder; SPSA sees
    bootstrap subsamples of one half and final values use the other half.
    ``auto`` takes ``pool`` when ``K`` fills less than ``pool_threshold`` of
    the worst-case cylinder, where cylinder sampling would mostly miss.
    """

    iterations: int = 500
    a_gain: float | None = None
    c_gain: float | None = None
    alpha_exp: float = 0.602
    gamma_exp: float = 0.101
    stability_A: float | None = None
    samples_per_eval: int = 1000
    restarts: int = 3
    final_samples: int = 100_000
    volume_samples: int = 1_000_000
    method: Method = Method.SPSA
    delta: float = DEFAULT_DELTA
    first_step: float = 0.05
    calibration_draws: int = 8
    tol_rel: float = 1e-3
    oracle: str = "auto"
    pool_threshold: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if self.oracle not in ORACLES:
            raise InvalidInstance(f"oracle must be one of {ORACLES}, got {self.oracle!r}")
        if not (0.5 < self.alpha_exp <= 1.0):
            raise InvalidInstance("alpha_exp must lie in (0.5, 1]")
        if not self.gamma_exp > 0:
            raise InvalidInstance("gamma_exp must be positive")
        if self.iterations < 1:
            raise InvalidInstance("iterations must be >= 1")
        if self.samples_per_eval < 1 or self.final_samples < 1:
            raise InvalidInstance("sample counts must be positive")
        if self.restarts < 0:
            raise InvalidInstance("restarts must be >= 0")

    @property
    def stability(self) -> float:
        return 0.1 * self.iterations if self.stability_A is None else self.stability_A

    def escalated(self, factor: int = 4) -> "SpsaConfig":
        return replace(self, samples_per_eval=self.samples_per_eval * factor,
                       final_samples=self.final_samples * factor)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["method"] = self.method.value
        return out


@dataclass(frozen=True)
class CurvePoint:
    r: float
    v_hat: float
    halfwidth: float
    method: Method


@dataclass
class ViolationCurve:
    points: list[CurvePoint]
    vol_K: float
    vol_K_halfwidth: float = 0.0
    epsilon_grid_meta: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def rows(self) -> list[tuple]:
        return [(p.r, p.v_hat, p.halfwidth, p.method.value) for p in self.points]

    def to_csv(self) -> str:
        lines = ["r,v_hat,halfwidth,method"]
        lines += [f"{r!r},{v!r},{h!r},{m}" for r, v, h, m in self.rows()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "points": [{"r": r, "v_hat": v, "halfwidth": h, "method": m} for r, v, h, m in self.rows()],
            "vol_K": self.vol_K,
            "vol_K_halfwidth": self.vol_K_halfwidth,
            "epsilon_grid_meta": self.epsilon_grid_meta,
            "diagnostics": self.diagnostics,
        }


@dataclass
class EstimateReport:
    z_wc: np.ndarray
    r_wc: float
    z_pr: np.ndarray
    r_pr: float
    z_ls: np.ndarray
    epsilon: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "z_wc": np.asarray(self.z_wc).tolist(),
            "r_wc": self.r_wc,
            "z_pr": np.asarray(self.z_pr).tolist(),
            "r_pr": self.r_pr,
            "z_ls": np.asarray(self.z_ls).tolist(),
            "ratio": self.r_pr / self.r_wc if self.r_wc > 0 else None,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class CenterResult:
    z: np.ndarray
    estimate: VolumeEstimate
    r: float
    mode: str = "cylinder"


@dataclass(frozen=True)
class ViolationPoint:
    r: float
    v_hat: float
    halfwidth: float
    z: np.ndarray
    estimate: VolumeEstimate


# --- per-instance context --------------------------------------------------

class _Context:
    """Quantities that depend on the instance only, computed lazily and cached."""

    def __init__(self, inst: RegularizedProblem):
        self.inst = inst
        self.base = inst.base
        self.p = inst.base.norm_p
        self._oracle = None
        self._exact = None
        self._worst = None
        self._anchor = None
        self._vol = {}
        self._pool = {}

    @property
    def oracle(self):
        if self._oracle is None:
            self._oracle = cylinder_oracle(self.inst)
        return self._oracle

    def exact(self) -> ExactPhi:
        if self._exact is None:
            if self.base.n > 3:
                raise InvalidInstance("exact method requires n <= 3")
            poly = consistency_polytope(self.base)
            self._exact = ExactPhi(poly, self.base.solution_matrix, self.p)
        return self._exact

    def worst_case(self) -> tuple[np.ndarray, float, BoxSummary, bool]:
        """(z_wc, r_wc, box of S K, r_wc_is_exact)."""
        if self._worst is None:
            sol = self.base.solution_matrix
            if self.p is NormP.INF:
                z, r, box = worst_case_box(self.base)
                self._worst = (z, r, box, True)
            elif self.p is NormP.TWO:
                center, shape = consistency_ellipsoid(self.base)
                cov = sol @ np.linalg.inv(shape) @ sol.T
                r = float(math.sqrt(max(np.linalg.eigvalsh(cov).max(), 0.0)))
                box = consistency_extent(self.base, sol)
                self._worst = (sol @ center, r, box, True)
            else:
                box = consistency_extent(self.base, sol)
                self._worst = (box.midpoint, float(np.sum(box.halfwidth)), box, False)
        return self._worst

    def anchor(self) -> np.ndarray:
        """A point of ``S K`` used as the pull-back target for infeasible centers."""
        if self._anchor is None:
            sol = self.base.solution_matrix
            if self.p is NormP.INF:
                x, _ = chebyshev_center(consistency_polytope(self.base))
            elif self.p is NormP.TWO:
                x, _ = consistency_ellipsoid(self.base)
            else:
                box = consistency_extent(self.base, np.eye(self.base.n))
                x = box.midpoint if self.base.contains(box.midpoint) else least_squares(self.base)
            self._anchor = sol @ x
        return self._anchor

    def volume_k(self, cfg: SpsaConfig, rng: RngStream) -> tuple[float, float]:
        """``vol(K)`` and its confidence halfwidth (0 when computed exactly)."""
        base = self.base
        if self.p is NormP.TWO:
            _, shape = consistency_ellipsoid(base)
            vol = lp_ball_volume(base.n, 1.0, NormP.TWO) / math.sqrt(np.linalg.det(shape))
            return vol, 0.0
        if base.n <= 3 and (self.p is NormP.INF or base.m <= 12):
            return self.exact().volume_k, 0.0
        return self._draw_k(cfg, rng)[:2]

    def _draw_k(self, cfg: SpsaConfig, rng: RngStream) -> tuple[float, float, np.ndarray]:
        """Box rejection sampling of ``K``: volume, halfwidth and the accepted points mapped by ``S``."""
        key = (cfg.volume_samples, cfg.delta)
        if key not in self._vol:
            gen = rng.child(0x5EED).generator()
            oracle = self.oracle
            lo, hi = oracle.box_lower, oracle.box_upper
            box_vol = float(np.prod(hi - lo))
            sol = self.base.solution_matrix
            kept = []
            hits = 0
            left = cfg.volume_samples
            while left > 0:
                k = min(left, 200_000)
                x = lo + (hi - lo) * gen.random((k, lo.shape[0]))
                if self.p is NormP.INF:
                    mask = (x @ oracle.rows.T - oracle.rhs).max(axis=1) <= 0.0
                else:
                    mask = self.base.contains(x)
                hits += int(np.count_nonzero(mask))
                kept.append(x[mask] @ sol.T)
                left -= k
            count = cfg.volume_samples
            self._vol[key] = (hits / count * box_vol, binomial_halfwidth(hits, count, cfg.delta) * box_vol,
                              np.concatenate(kept) if kept else np.zeros((0, sol.shape[0])))
        return self._vol[key]

    def mode(self, cfg: SpsaConfig, rng: RngStream) -> str:
        if cfg.method is Method.EXACT:
            return "exact"
        if cfg.oracle != "auto":
            return cfg.oracle
        if self.p is NormP.TWO or (self.base.n <= 3 and (self.p is NormP.INF or self.base.m <= 12)):
            return "cylinder"
        vol_k, _ = self.volume_k(cfg, rng)
        _, r_wc, _, _ = self.worst_case()
        fill = vol_k / self.oracle.cylinder_volume(r_wc)
        return "pool" if fill < cfg.pool_threshold else "cylinder"

    def pool(self, cfg: SpsaConfig, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
        """Search half and held-out half of the mapped uniform points of ``K``."""
        pts = self._draw_k(cfg, rng)[2]
        if pts.shape[0] < 2:
            raise EmptyCylinder("too few accepted points of K for the pool oracle; raise volume_samples")
        return pts[0::2], pts[1::2]

    def meets(self, z: np.ndarray, r: float) -> bool:
        return distance_to_image(self.base, z) <= r * (1 + 1e-9) + 1e-12


_CONTEXTS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_REGULARIZED: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _as_regularized(inst) -> RegularizedProblem:
    if isinstance(inst, RegularizedProblem):
        return inst
    reg = _REGULARIZED.get(inst)
    if reg is None:
        reg = regularize(inst)
        _REGULARIZED[inst] = reg
    return reg


def _context(inst) -> _Context:
    reg = _as_regularized(inst)
    ctx = _CONTEXTS.get(reg)
    if ctx is None:
        ctx = _Context(reg)
        _CONTEXTS[reg] = ctx
    return ctx


def _stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("rng must be an RngStream or an integer seed")


# --- SPSA ------------------------------------------------------------------

class _Objective:
    """Normalized objective (volume fraction) with paired evaluations."""

    def __init__(self, ctx: _Context, r: float, cfg: SpsaConfig, rng: RngStream):
        self.ctx = ctx
        self.r = r
        self.cfg = cfg
        self.mode = ctx.mode(cfg, rng)
        if self.mode == "pool":
            search, self.held = ctx.pool(cfg, rng)
            self.search_cols = np.ascontiguousarray(search.T)
            self.vol_k = ctx.volume_k(cfg, rng)[0]
        else:
            self.v_c = ctx.oracle.cylinder_volume(r)
        if self.mode == "exact":
            self._phi = ctx.exact()

    def _count_cols(self, cols: np.ndarray, z: np.ndarray) -> int:
        if self.ctx.p is not NormP.INF:
            return int(np.count_nonzero(self._inside(cols.T, z)))
        # coordinate by coordinate is cheaper than a row-wise max for small s
        mask = np.abs(cols[0] - z[0]) <= self.r
        for j in range(1, cols.shape[0]):
            mask &= np.abs(cols[j] - z[j]) <= self.r
        return int(np.count_nonzero(mask))

    def _inside(self, pts: np.ndarray, z: np.ndarray) -> np.ndarray:
        d = pts - z
        if self.ctx.p is NormP.INF:
            return np.abs(d).max(axis=-1) <= self.r
        if self.ctx.p is NormP.ONE:
            return np.abs(d).sum(axis=-1) <= self.r
        return (d * d).sum(axis=-1) <= self.r * self.r

    def pair(self, z1: np.ndarray, z2: np.ndarray, gen: np.random.Generator) -> tuple[float, float]:
        n = self.cfg.samples_per_eval
        if self.mode == "exact":
            return self._phi(z1, self.r) / self.v_c, self._phi(z2, self.r) / self.v_c
        if self.mode == "pool":
            cols = self.search_cols[:, gen.integers(0, self.search_cols.shape[1], size=n)]
            return self._count_cols(cols, z1) / n, self._count_cols(cols, z2) / n
        oracle = self.ctx.oracle
        u, xi = oracle.draw(gen, n)
        base = oracle.base_residuals(u, xi, self.r)
        return oracle.count_hits(base, z1) / n, oracle.count_hits(base, z2) / n

    def final(self, z: np.ndarray, gen: np.random.Generator) -> VolumeEstimate:
        if self.mode == "exact":
            return VolumeEstimate.exact(self._phi(z, self.r), self.v_c)
        if self.mode == "pool":
            hits = int(np.count_nonzero(self._inside(self.held, np.asarray(z, dtype=float))))
            return VolumeEstimate.from_counts(hits, self.held.shape[0], self.vol_k, self.cfg.delta)
        return self.ctx.oracle.estimate(z, self.r, self.cfg.final_samples, gen, self.cfg.delta)


def _pull_inside(ctx: _Context, z: np.ndarray, r: float, accept, steps: int = 30) -> np.ndarray:
    """Bisection along the segment from the anchor to ``z`` until ``accept`` holds."""
    if accept(z):
        return z
    anchor = ctx.anchor()
    lo, hi = 0.0, 1.0  # fraction of the way from anchor to z
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if accept(anchor + mid * (z - anchor)):
            lo = mid
        else:
            hi = mid
    return anchor + lo * (z - anchor)


def _spsa_search(obj: _Objective, z0: np.ndarray, diameter: float, gen: np.random.Generator,
                 accept, check_steps: bool) -> np.ndarray:
    """Maximize the objective from ``z0``; returns the average of the late iterates.

    ``accept`` is the feasibility test for centers.  Unconstrained searches
    only consult it when both perturbed evaluations come back empty, since a
    hit already certifies that the cylinder meets ``K``.
    """
    cfg, r, ctx = obj.cfg, obj.r, obj.ctx
    dim = z0.shape[0]
    z = _pull_inside(ctx, np.array(z0, dtype=float), r, accept)
    big_a = cfg.stability
    c = cfg.c_gain if cfg.c_gain is not None else 0.1 * r
    step0 = cfg.first_step * diameter

    if cfg.a_gain is not None:
        a = cfg.a_gain
    else:
        mags = []
        for _ in range(cfg.calibration_draws):
            delta = gen.choice((-1.0, 1.0), size=dim)
            fp, fm = obj.pair(z + c * delta, z - c * delta, gen)
            mags.append(abs(fp - fm) / (2 * c))
        g_mag = float(np.mean(mags))
        if g_mag <= 0:
            g_mag = 0.5 / r
        a = step0 * (big_a + 1) ** cfg.alpha_exp / g_mag
    max_step = 2.0 * step0

    avg = np.zeros(dim)
    n_avg = 0
    start_avg = cfg.iterations // 2
    for k in range(cfg.iterations):
        a_k = a / (k + 1 + big_a) ** cfg.alpha_exp
        c_k = c / (k + 1) ** cfg.gamma_exp
        delta = gen.choice((-1.0, 1.0), size=dim)
        fp, fm = obj.pair(z + c_k * delta, z - c_k * delta, gen)
        if fp == 0.0 and fm == 0.0:
            # flat zero region: move toward S K instead of stalling
            z = _pull_inside(ctx, z, r, accept)
            z = z + 0.5 * (ctx.anchor() - z)
        else:
            step = a_k * (fp - fm) / (2 * c_k) * delta
            peak = np.max(np.abs(step))
            if peak > max_step:
                step *= max_step / peak
            cand = z + step
            if not check_steps or accept(cand):
                z = cand
        if k >= start_avg:
            n_avg += 1
            avg += (z - avg) / n_avg
    if n_avg == 0:
        return z
    return avg if not check_steps or accept(avg) else z


def phi_max(inst, r: float, cfg: SpsaConfig | None = None, rng=None, *,
            starts: list | None = None, constraint: str | None = None) -> tuple[np.ndarray, VolumeEstimate]:
    """Best cylinder center at radius ``r`` and the oracle's volume at that center.

    ``constraint="interpolatory"`` restricts candidates to ``S K``.
    """
    res = _phi_max(_context(inst), r, cfg or SpsaConfig(), _stream(rng), starts, constraint)
    return res.z, res.estimate


def _phi_max(ctx: _Context, r: float, cfg: SpsaConfig, rng: RngStream,
             starts=None, constraint=None) -> CenterResult:
    if not r > 0:
        raise InvalidInstance("radius must be positive")
    try:
        ctx.anchor()
        z_wc, r_wc, box, _ = ctx.worst_case()
    except Infeasible:
        raise EmptyH(f"no feasible center at radius {r}: consistency set is empty") from None
    obj = _Objective(ctx, r, cfg, rng)

    if constraint == "interpolatory":
        def accept(z):
            return in_image(ctx.base, z, tol=1e-9 * max(1.0, r_wc))
    else:
        def accept(z):
            return ctx.meets(z, r)

    if starts is None:
        gen0 = rng.child(0).generator()
        starts = [z_wc] + [box.lower + (box.upper - box.lower) * gen0.random(box.lower.shape[0])
                           for _ in range(cfg.restarts)]
    diameter = 2.0 * float(np.max(box.halfwidth)) if box.lower.size else 1.0
    diameter = max(diameter, 1e-12)

    def run(item):
        idx, z0 = item
        gen = rng.child(idx + 1).generator()
        z = _spsa_search(obj, np.asarray(z0, dtype=float), diameter, gen, accept,
                         check_steps=constraint == "interpolatory")
        return z

    candidates = parallel_map(run, list(enumerate(starts)))
    if len(candidates) == 1:
        best = candidates[0]
    else:
        # compare candidates on common samples, then re-estimate the winner on a fresh stream
        scores = [obj.final(z, rng.child(10_000).generator()).value for z in candidates]
        best = candidates[int(np.argmax(scores))]
    est = obj.final(best, rng.child(10_001).generator())
    if est.value == 0.0 and not accept(best):
        best = _pull_inside(ctx, best, r, accept)
        est = obj.final(best, rng.child(10_002).generator())
    return CenterResult(best, est, r, obj.mode)


def _violation_point(ctx: _Context, r: float, cfg: SpsaConfig, rng: RngStream,
                     constraint=None, starts=None) -> ViolationPoint:
    vol_k, vol_hw = ctx.volume_k(cfg, rng)
    z_wc, r_wc, _, exact_wc = ctx.worst_case()
    if exact_wc and constraint is None and r >= r_wc:
        # the worst-case cylinder already contains K
        return ViolationPoint(r, 0.0, 0.0, np.array(z_wc), VolumeEstimate.exact(vol_k))
    if cfg.method is Method.SDP:
        if constraint is not None:
            raise InvalidInstance("the ellipsoid relaxation does not support constrained centers")
        from .mve import sdp_point

        v, hw, z, est = sdp_point(ctx.inst, r, cfg, rng, (vol_k, vol_hw))
        return ViolationPoint(r, v, hw, z, est)
    res = _phi_max(ctx, r, cfg, rng, starts=starts, constraint=constraint)
    phi = res.estimate.value
    v = 1.0 - phi / vol_k
    hw = res.estimate.confidence_halfwidth / vol_k
    if res.mode == "cylinder":
        hw += phi * vol_hw / vol_k**2
    return ViolationPoint(r, float(min(max(v, 0.0), 1.0)), float(hw), res.z, res.estimate)


def violation_at(inst, r: float, cfg: SpsaConfig | None = None, rng=None) -> tuple[float, float]:
    pt = _violation_point(_context(inst), r, cfg or SpsaConfig(), _stream(rng))
    return pt.v_hat, pt.halfwidth


def violation_curve(inst, r_grid, cfg: SpsaConfig | None = None, rng=None) -> ViolationCurve:
    """Violation values over an increasing grid, reported after a monotone projection."""
    cfg = cfg or SpsaConfig()
    rng = _stream(rng)
    grid = np.asarray(r_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise InvalidInstance("r_grid must be positive and strictly increasing")
    ctx = _context(inst)
    vol_k, vol_hw = ctx.volume_k(cfg, rng)

    def evaluate(item):
        i, r = item
        pt = _violation_point(ctx, r, cfg, rng.child(i + 1))
        return pt.v_hat, pt.halfwidth, pt.z

    results = parallel_map(evaluate, list(enumerate(grid)))
    raw = np.array([res[0] for res in results])
    halfwidths = [float(res[1]) for res in results]
    mono = isotonic_regression(raw, increasing=False).x if raw.size > 1 else raw
    points = [CurvePoint(float(r), float(min(max(v, 0.0), 1.0)), hw, cfg.method)
              for r, v, hw in zip(grid, mono, halfwidths)]
    return ViolationCurve(
        points=points,
        vol_K=float(vol_k),
        vol_K_halfwidth=float(vol_hw),
        epsilon_grid_meta={"r_min": float(grid[0]), "r_max": float(grid[-1]), "steps": int(grid.size)},
        diagnostics={
            "raw_v_hat": raw.tolist(),
            "centers": [np.asarray(res[2]).tolist() for res in results],
            "seed": rng.to_dict(),
        },
    )


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    return epsilon


def _bisect(inst, epsilon: float, cfg: SpsaConfig, rng: RngStream, constraint=None) -> EstimateReport:
    epsilon = _check_epsilon(epsilon)
    ctx = _context(inst)
    if ctx.p is NormP.ONE:
        raise UnsupportedNorm("the probabilistic radius needs the worst-case radius, available for inf/two norms")
    z_wc, r_wc, _, _ = ctx.worst_case()
    vol_k, vol_hw = ctx.volume_k(cfg, rng)
    tol = cfg.tol_rel * r_wc
    lo, hi = 0.0, r_wc
    z_hi = np.array(z_wc)
    est_hi = VolumeEstimate.exact(vol_k)
    hi_hw = 0.0
    steps = []
    if constraint == "interpolatory":
        # the worst-case center need not be interpolatory; the upper end is evaluated
        top = _violation_point(ctx, r_wc, cfg, rng.child(999), constraint)
        z_hi, est_hi, hi_hw = top.z, top.estimate, top.halfwidth
    k = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        pt = _violation_point(ctx, mid, cfg, rng.child(k + 1), constraint)
        decision = None
        escalated = False
        if pt.v_hat - pt.halfwidth > epsilon:
            decision = "lo"
        elif pt.v_hat + pt.halfwidth <= epsilon:
            decision = "hi"
        else:
            escalated = True
            pt = _violation_point(ctx, mid, cfg.escalated(), rng.child(k + 1).child(4), constraint)
            decision = "lo" if pt.v_hat > epsilon else "hi"
        if decision == "lo":
            lo = mid
        else:
            hi, z_hi, est_hi, hi_hw = mid, pt.z, pt.estimate, pt.halfwidth
        steps.append({"r": mid, "v_hat": pt.v_hat, "halfwidth": pt.halfwidth,
                      "decision": decision, "escalated": escalated})
        k += 1

    z_ls = ctx.inst.original.solution_matrix @ least_squares(ctx.inst.original)
    diagnostics = {
        "method": cfg.method.value,
        "constraint": constraint or "none",
        "norm_p": ctx.p.value,
        "vol_K": float(vol_k),
        "vol_K_halfwidth": float(vol_hw),
        "phi_at_r_pr": est_hi.to_dict(),
        "v_halfwidth_at_r_pr": float(hi_hw),
        "confidence_level": 1.0 - cfg.delta,
        "tol_r": tol,
        "bisection": steps,
        "seed": rng.to_dict(),
        "spsa": cfg.to_dict(),
    }
    return EstimateReport(
        z_wc=np.array(z_wc), r_wc=float(r_wc), z_pr=np.array(z_hi), r_pr=float(hi),
        z_ls=z_ls, epsilon=epsilon, diagnostics=diagnostics,
    )


def probabilistic_radius(inst, epsilon: float, cfg: SpsaConfig | None = None, rng=None) -> EstimateReport:
    return _bisect(inst, epsilon, cfg or SpsaConfig(), _stream(rng))


def interpolatory_constrained_radius(inst, epsilon: float, cfg: SpsaConfig | None = None,
                                     rng=None) -> EstimateReport:
    """As :func:`probabilistic_radius` with centers restricted to ``S K``."""
    return _bisect(inst, epsilon, cfg or SpsaConfig(), _stream(rng), constraint="interpolatory")
