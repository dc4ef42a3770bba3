"""Problem instances, solution-operator regularization and consistency sets.

Measurements follow ``y = I x + eta`` with ``||eta||_p <= rho``; the quantity
of interest is ``z = S x``.  The consistency set ``K`` collects every ``x``
that the data do not rule out.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidInstance,
    RankDeficient,
    SingularNormalEquations,
    TooManyFacets,
    UnsupportedNorm,
)

RANK_RTOL = 1e-10
MAX_L1_ROWS = 12


class NormP(str, enum.Enum):
    ONE = "one"
    TWO = "two"
    INF = "inf"

    @classmethod
    def parse(cls, value) -> "NormP":
        if isinstance(value, NormP):
            return value
        text = str(value).strip().lower()
        aliases = {"1": "one", "l1": "one", "2": "two", "l2": "two",
                   "infinity": "inf", "linf": "inf"}
        text = aliases.get(text, text)
        try:
            return cls(text)
        except ValueError:
            raise InvalidInstance(f"unknown norm {value!r}") from None

    @property
    def order(self) -> float:
        return {"one": 1.0, "two": 2.0, "inf": np.inf}[self.value]


def lp_norm(v: np.ndarray, p: NormP, axis=-1) -> np.ndarray:
    if p is NormP.INF:
        return np.max(np.abs(v), axis=axis)
    if p is NormP.ONE:
        return np.sum(np.abs(v), axis=axis)
    return np.sqrt(np.sum(v * v, axis=axis))


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if a.size == 0:
        return 0
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    info_matrix: np.ndarray
    data: np.ndarray
    noise_radius: float
    norm_p: NormP
    solution_matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "info_matrix", np.atleast_2d(np.asarray(self.info_matrix, dtype=float)))
        object.__setattr__(self, "data", np.atleast_1d(np.asarray(self.data, dtype=float)).ravel())
        object.__setattr__(self, "noise_radius", float(self.noise_radius))
        object.__setattr__(self, "norm_p", NormP.parse(self.norm_p))
        object.__setattr__(self, "solution_matrix", np.atleast_2d(np.asarray(self.solution_matrix, dtype=float)))

    @property
    def m(self) -> int:
        return self.info_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.info_matrix.shape[1]

    @property
    def s(self) -> int:
        return self.solution_matrix.shape[0]

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Membership of point(s) ``x`` (shape (n,) or (N, n)) in the consistency set."""
        x = np.asarray(x, dtype=float)
        resid = x @ self.info_matrix.T - self.data
        return lp_norm(resid, self.norm_p) <= self.noise_radius + tol

    def to_dict(self) -> dict:
        return {
            "info_matrix": self.info_matrix.tolist(),
            "data": self.data.tolist(),
            "noise_radius": self.noise_radius,
            "norm_p": self.norm_p.value,
            "solution_matrix": self.solution_matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProblemInstance":
        try:
            return cls(
                info_matrix=doc["info_matrix"],
                data=doc["data"],
                noise_radius=doc["noise_radius"],
                norm_p=doc.get("norm_p", "inf"),
                solution_matrix=doc["solution_matrix"],
            )
        except KeyError as exc:
            raise InvalidInstance(f"instance document missing field {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))


@dataclass
class ValidationReport:
    m: int
    n: int
    s: int
    rank_info: int
    rank_solution: int
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "m": self.m,
            "n": self.n,
            "s": self.s,
            "rank_info": self.rank_info,
            "rank_solution": self.rank_solution,
            "failures": list(self.failures),
        }


def validate(inst: ProblemInstance) -> ValidationReport:
    """Check the shape/rank assumptions; never raises."""
    info, sol = inst.info_matrix, inst.solution_matrix
    m, n = info.shape
    s = sol.shape[0]
    failures = []
    if inst.data.shape[0] != m:
        failures.append(f"data length {inst.data.shape[0]} != m={m}")
    if sol.shape[1] != n:
        failures.append(f"solution_matrix has {sol.shape[1]} columns, expected n={n}")
    if not (m >= n >= s >= 1):
        failures.append(f"dimensions must satisfy m >= n >= s >= 1 (m={m}, n={n}, s={s})")
    finite = all(np.all(np.isfinite(a)) for a in (info, sol, inst.data))
    if not finite:
        failures.append("non-finite entries")
    rank_i = numerical_rank(info) if finite else 0
    rank_s = numerical_rank(sol) if finite else 0
    if rank_i < n:
        failures.append(f"rank(I)={rank_i} < n={n}: information operator is not one-to-one")
    if rank_s < s:
        failures.append(f"rank(S)={rank_s} < s={s}: solution operator is not full row rank")
    if not (inst.noise_radius > 0):
        failures.append(f"noise_radius must be positive (got {inst.noise_radius})")
    return ValidationReport(m, n, s, rank_i, rank_s, failures)


def require_valid(inst: ProblemInstance) -> None:
    report = validate(inst)
    if not report.passed:
        raise InvalidInstance("; ".join(report.failures))


@dataclass(frozen=True, eq=False)
class RegularizedProblem:
    """Instance rewritten in coordinates ``x = T x_tilde`` where ``S T = [S_bar 0]``.

    ``base`` holds the transformed operators; ``original`` keeps the input.
    """

    base: ProblemInstance
    s_bar: np.ndarray
    transform: np.ndarray
    original: ProblemInstance

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def s(self) -> int:
        return self.base.s

    def to_original(self, x_tilde: np.ndarray) -> np.ndarray:
        return np.asarray(x_tilde) @ self.transform.T

    def from_original(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.transform


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def regularize(inst: ProblemInstance) -> RegularizedProblem:
    sol = inst.solution_matrix
    s, n = sol.shape
    if numerical_rank(sol) < s:
        raise RankDeficient(f"numerical rank of S is below s={s}")
    require_valid(inst)

    head, tail = sol[:, :s], sol[:, s:]
    if not np.any(tail) and numerical_rank(head) == s:
        # already of the form [S_bar 0]
        transform = np.eye(n)
    else:
        q, _ = np.linalg.qr(sol.T, mode="complete")
        transform = _fix_signs(q)

    s_tilde = sol @ transform
    s_tilde[:, s:] = 0.0
    s_bar = s_tilde[:, :s].copy()
    scale = np.linalg.norm(sol, 2) ** s
    if abs(np.linalg.det(s_bar)) <= 1e-12 * max(scale, 1.0):
        raise RankDeficient("regularized S_bar is singular")

    base = ProblemInstance(
        info_matrix=inst.info_matrix @ transform,
        data=inst.data.copy(),
        noise_radius=inst.noise_radius,
        norm_p=inst.norm_p,
        solution_matrix=s_tilde,
    )
    return RegularizedProblem(base=base, s_bar=s_bar, transform=transform, original=inst)


@dataclass(frozen=True, eq=False)
class HPolytope:
    """Halfspace description ``{x : A x <= b}``."""

    a_matrix: np.ndarray
    b_vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_matrix", np.atleast_2d(np.asarray(self.a_matrix, dtype=float)))
        object.__setattr__(self, "b_vector", np.atleast_1d(np.asarray(self.b_vector, dtype=float)).ravel())
        if self.a_matrix.shape[0] != self.b_vector.shape[0]:
            raise InvalidInstance("HPolytope row count mismatch")

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[1]

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.a_matrix.T <= self.b_vector + tol, axis=-1)

    def intersect(self, other: "HPolytope") -> "HPolytope":
        return HPolytope(np.vstack([self.a_matrix, other.a_matrix]),
                         np.concatenate([self.b_vector, other.b_vector]))

    def to_dict(self) -> dict:
        return {"a_matrix": self.a_matrix.tolist(), "b_vector": self.b_vector.tolist()}


def consistency_polytope(inst: ProblemInstance) -> HPolytope:
    info, y, rho = inst.info_matrix, inst.data, inst.noise_radius
    if inst.norm_p is NormP.INF:
        return HPolytope(np.vstack([info, -info]), np.concatenate([rho + y, rho - y]))
    if inst.norm_p is NormP.ONE:
        m = inst.m
        if m > MAX_L1_ROWS:
            raise TooManyFacets(f"l1 consistency set with m={m} > {MAX_L1_ROWS} rows")
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=m)))
        return HPolytope(signs @ info, rho + signs @ y)
    raise UnsupportedNorm("l2 consistency sets are ellipsoids; use consistency_ellipsoid")


def _weighted_factor(info: np.ndarray, weight: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Return (R, Q^T W^{1/2}) from the QR factorization of W^{1/2} I."""
    m, n = info.shape
    if weight is None:
        root = np.eye(m)
    else:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (m, m) or not np.allclose(weight, weight.T, atol=1e-12 * max(1.0, np.abs(weight).max())):
            raise InvalidInstance("weight must be a symmetric m x m matrix")
        try:
            root = np.linalg.cholesky(weight).T
        except np.linalg.LinAlgError:
            raise InvalidInstance("weight must be positive definite") from None
    q, r = np.linalg.qr(root @ info)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= 1e-12 * max(diag.max(), 1e-300):
        raise SingularNormalEquations("I^T W I is numerically singular")
    return r, q.T @ root


def weighted_least_squares(info: np.ndarray, y: np.ndarray, weight: np.ndarray | None = None) -> np.ndarray:
    r, proj = _weighted_factor(info, weight)
    return np.linalg.solve(r, proj @ y)


def normal_matrix(info: np.ndarray, weight: np.ndarray | None = None) -> np.ndarray:
    """``I^T W I`` assembled from the triangular factor."""
    r, _ = _weighted_factor(info, weight)
    return r.T @ r


def consistency_ellipsoid(inst: ProblemInstance, weight: np.ndarray | None = None):
    """Center and shape of ``{x : (x - c)^T Q (x - c) <= 1}`` for l2 noise."""
    if inst.norm_p is not NormP.TWO:
        raise UnsupportedNorm("consistency_ellipsoid requires norm_p = two")
    info, y = inst.info_matrix, inst.data
    center = weighted_least_squares(info, y, weight)
    resid = y - info @ center
    w = np.eye(inst.m) if weight is None else np.asarray(weight, dtype=float)
    # ||Ix - y||_W^2 = (x - c)^T I^T W I (x - c) + ||y - Ic||_W^2
    radius2 = inst.noise_radius**2 - float(resid @ w @ resid)
    if radius2 <= 0:
        raise InvalidInstance("l2 consistency set is empty or degenerate for these data")
    shape = normal_matrix(info, weight) / radius2
    return center, shape
