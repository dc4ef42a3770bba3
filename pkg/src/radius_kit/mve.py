"""Maximum-volume ellipsoid inscribed in ``K`` and a movable cylinder.

The center ``z`` of the cylinder is a decision variable, so the problem picks
the cylinder whose intersection with ``K`` holds the largest ellipsoid.  The
center found this way gives an upper bound on the optimal violation.

Each containment constraint ``{x_E + P w : |w| <= 1} in {a^T x <= b}`` is the
cone ``|P a| <= b - a^T x``.  We solve with a log-barrier Newton method; the
problems are tiny and a conic solver would be a heavy dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, InfeasibleIntersection, InvalidInstance, NumericalFailure, UnsupportedNorm
from .lp import chebyshev_center
from .model import NormP, ProblemInstance, RegularizedProblem, consistency_polytope
from .sampling import RngStream
from .volume import VolumeEstimate

GAP_TOL = 1e-8
T_FACTOR = 5.0
EIG_FLOOR = 1e-10
CENTER_TOL = 1e-6  # squared Newton decrement of the t-scaled barrier function
STALL_TOL = 1e-3


@dataclass
class InscribedEllipsoid:
    center: np.ndarray
    shape: np.ndarray
    cylinder_center: np.ndarray
    log_det: float
    certificate: dict = field(default_factory=dict)

    def residuals(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``b - a^T x_E - |P a|`` for each row; nonnegative when the ellipsoid fits."""
        return b - a @ self.center - np.linalg.norm(a @ self.shape, axis=1)

    def volume(self) -> float:
        n = self.center.shape[0]
        return math.exp(self.log_det + 0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1))

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "cylinder_center": self.cylinder_center.tolist(),
            "log_det": self.log_det,
            "certificate": self.certificate,
        }


def _original(inst) -> ProblemInstance:
    if isinstance(inst, RegularizedProblem):
        return inst.original
    return inst


def _sym_basis(n: int) -> np.ndarray:
    """Basis matrices ``E_k`` (N x n x n) for symmetric ``P = sum p_k E_k``."""
    mats = []
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0
            mats.append(e)
    return np.array(mats)


def _sym_params(p_mat: np.ndarray) -> np.ndarray:
    n = p_mat.shape[0]
    return np.array([p_mat[i, j] for i in range(n) for j in range(i, n)])


class _Barrier:
    """``-t logdet P - sum ln(u_j^2 - |P a_j|^2)`` over ``w = (x, z, p)``."""

    def __init__(self, a: np.ndarray, b: np.ndarray, g: np.ndarray):
        self.a, self.b, self.g = a, b, g
        j, n = a.shape
        s = g.shape[1]
        self.n, self.s = n, s
        self.basis = _sym_basis(n)
        self.n_p = self.basis.shape[0]
        self.dim = n + s + self.n_p
        # u = b + g z - a x is affine in w
        self.d = np.hstack([-a, g, np.zeros((j, self.n_p))])
        # P a_j = B_j p
        self.bmat = np.einsum("kil,jl->jik", self.basis, a)
        self.vec_basis = self.basis.reshape(self.n_p, n * n)

    def unpack(self, w: np.ndarray):
        n, s = self.n, self.s
        x, z, p = w[:n], w[n:n + s], w[n + s:]
        return x, z, np.einsum("k,kij->ij", p, self.basis)

    def slack(self, w: np.ndarray):
        x, z, pm = self.unpack(w)
        u = self.b + self.g @ z - self.a @ x
        q = self.a @ pm
        return u, q, pm

    def feasible(self, w: np.ndarray) -> bool:
        u, q, pm = self.slack(w)
        if np.any(u <= 0) or np.any(u * u - np.einsum("ij,ij->i", q, q) <= 0):
            return False
        return float(np.linalg.eigvalsh(pm).min()) > EIG_FLOOR

    def value(self, w: np.ndarray, t: float) -> float:
        u, q, pm = self.slack(w)
        psi = u * u - np.einsum("ij,ij->i", q, q)
        _, logdet = np.linalg.slogdet(pm)
        return float(-t * logdet - np.sum(np.log(psi)))

    def derivatives(self, w: np.ndarray, t: float):
        n, s = self.n, self.s
        u, q, pm = self.slack(w)
        psi = u * u - np.einsum("ij,ij->i", q, q)
        # gradient of psi_j
        bq = np.einsum("jik,ji->jk", self.bmat, q)
        dpsi = 2.0 * u[:, None] * self.d
        dpsi[:, n + s:] -= 2.0 * bq
        gvec = dpsi / psi[:, None]
        grad = -gvec.sum(axis=0)
        hess = gvec.T @ gvec
        hess -= 2.0 * (self.d / psi[:, None]).T @ self.d
        hess[n + s:, n + s:] += 2.0 * np.einsum("jik,jil,j->kl", self.bmat, self.bmat, 1.0 / psi)
        pinv = np.linalg.inv(pm)
        grad[n + s:] -= t * np.einsum("kij,ji->k", self.basis, pinv)
        kron = np.kron(pinv, pinv)
        hess[n + s:, n + s:] += t * self.vec_basis @ kron @ self.vec_basis.T
        return grad, hess


def _newton(bar: _Barrier, w: np.ndarray, t: float, max_iter: int = 100) -> tuple[np.ndarray, float]:
    f = bar.value(w, t)
    dec = float("inf")
    for _ in range(max_iter):
        grad, hess = bar.derivatives(w, t)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        dec = float(-grad @ step)
        if dec <= CENTER_TOL:
            break
        h = 1.0
        while h > 1e-14:
            cand = w + h * step
            if bar.feasible(cand):
                fc = bar.value(cand, t)
                if fc <= f - 0.25 * h * dec:
                    break
            h *= 0.5
        else:
            if dec <= STALL_TOL:
                # rounding floor near the central path; the point is centered enough
                break
            raise NumericalFailure("line search stalled in the ellipsoid solve", iterate=w.tolist())
        w, f = cand, fc
    return w, dec


def _constraints(inst: ProblemInstance, r: float):
    """Rows of ``K`` and of the cylinder as ``a x <= b + g z``."""
    poly = consistency_polytope(inst)
    sol = inst.solution_matrix
    s = sol.shape[0]
    a = np.vstack([poly.a_matrix, sol, -sol])
    b = np.concatenate([poly.b_vector, np.full(2 * s, r)])
    g = np.vstack([np.zeros((poly.a_matrix.shape[0], s)), np.eye(s), -np.eye(s)])
    return poly, a, b, g


def solve_mve(inst, r: float) -> InscribedEllipsoid:
    """Largest ellipsoid inside ``K`` and some cylinder ``C(z, r)``, with its center ``z``."""
    base = _original(inst)
    if base.norm_p is not NormP.INF:
        raise UnsupportedNorm("the ellipsoid relaxation is implemented for the inf-norm only")
    r = float(r)
    if not r > 0:
        raise InvalidInstance("radius must be positive")
    poly, a, b, g = _constraints(base, r)
    try:
        x0, rad = chebyshev_center(poly)
    except Infeasible:
        raise InfeasibleIntersection("consistency set is empty") from None
    if not rad > 0:
        raise InfeasibleIntersection("consistency set has no interior")
    sol = base.solution_matrix
    row_norm = float(np.linalg.norm(sol, axis=1).max())
    scale = 0.5 * min(rad, r / row_norm)
    bar = _Barrier(a, b, g)
    w = np.concatenate([x0, sol @ x0, _sym_params(scale * np.eye(base.n))])
    if not bar.feasible(w):
        raise InfeasibleIntersection("no strictly feasible start for the ellipsoid problem")

    cones = a.shape[0]
    t = 1.0
    while True:
        w, dec = _newton(bar, w, t)
        _, _, pm = bar.unpack(w)
        logdet = float(np.linalg.slogdet(pm)[1])
        gap = 2.0 * cones / t
        if gap <= GAP_TOL * (1.0 + abs(logdet)):
            break
        t *= T_FACTOR
        if t > 1e16:
            raise NumericalFailure("barrier parameter diverged", iterate=w.tolist())

    x, z, pm = bar.unpack(w)
    pm = 0.5 * (pm + pm.T)
    grad, _ = bar.derivatives(w, t)
    ell = InscribedEllipsoid(x, pm, z, float(np.linalg.slogdet(pm)[1]))
    ell.certificate = {
        "duality_gap_bound": gap,
        "complementarity": 2.0 / t,
        "stationarity": float(np.linalg.norm(grad)) / t,
        "newton_decrement": dec,
        "min_residual": float(ell.residuals(a, b + g @ z).min()),
    }
    return ell


def _phi_at(inst, z: np.ndarray, r: float, cfg, rng: RngStream) -> tuple[VolumeEstimate, str]:
    """phi at a fixed center: exact for ``n <= 3``, else the configured randomized oracle."""
    from .optimizer import _context, _Objective

    ctx = _context(inst)
    if ctx.base.n <= 3:
        return VolumeEstimate.exact(ctx.exact()(z, r)), "exact"
    obj = _Objective(ctx, r, cfg, rng)
    return obj.final(z, rng.child(7).generator()), obj.mode


def sdp_violation(inst, r: float, oracle_samples: int = 100_000, rng=None) -> tuple[float, np.ndarray]:
    """Violation at the relaxation's cylinder center, ``1 - phi(z_sdp, r) / vol(K)``."""
    from .optimizer import SpsaConfig, _context, _stream

    rng = _stream(rng)
    cfg = SpsaConfig(final_samples=oracle_samples)
    v, _, z, _ = sdp_point(inst, r, cfg, rng, _context(inst).volume_k(cfg, rng))
    return v, z


def sdp_point(inst, r: float, cfg, rng: RngStream, vol) -> tuple[float, float, np.ndarray, VolumeEstimate]:
    """``(v_sdp, halfwidth, z_sdp, phi estimate)`` for one radius."""
    vol_k, vol_hw = vol
    ell = solve_mve(inst, r)
    est, mode = _phi_at(inst, ell.cylinder_center, r, cfg, rng)
    phi = est.value
    v = 1.0 - phi / vol_k
    hw = est.confidence_halfwidth / vol_k
    if mode == "cylinder":
        hw += phi * vol_hw / vol_k**2
    return float(min(max(v, 0.0), 1.0)), float(hw), ell.cylinder_center, est
