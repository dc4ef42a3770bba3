"""Instance recipes, end-to-end runs and the three-way comparison study."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidInstance, RadiusKitError
from .gaussian import least_squares
from .lp import worst_case_box
from .model import ProblemInstance, require_valid
from .optimizer import (
    EstimateReport,
    Method,
    SpsaConfig,
    ViolationCurve,
    probabilistic_radius,
    violation_curve,
)
from .parallel import parallel_map
from .sampling import RngStream

log = logging.getLogger(__name__)

SEC7_SOLUTION = np.array([
    [-5.0, 10.0, -7.0, 0.0, 0.0],
    [3.0, -4.0, 7.0, 0.0, 0.0],
    [2.0, 6.0, 4.0, 0.0, 0.0],
])
FIR2_TRUE = np.array([1.25, 2.35])


class RecipeKind(str, enum.Enum):
    SEC7 = "sec7"
    FIR2 = "fir2"


@dataclass(frozen=True)
class Recipe:
    """Random instance generator.

    ``sec7``: integer-rounded uniform regressors in [-10, 10], uniform noise in
    [-rho, rho], all-ones true parameter.  ``fir2``: second-order FIR model
    driven by a standard Gaussian input, true parameter (1.25, 2.35).
    """

    kind: RecipeKind = RecipeKind.SEC7
    m: int = 150
    n: int = 5
    s: int = 3
    rho: float = 5.0
    seed: int = 0
    solution_matrix: list | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RecipeKind(str(getattr(self.kind, "value", self.kind)).lower()))

    @classmethod
    def fir2(cls, m: int = 100, rho: float = 0.5, seed: int = 0) -> "Recipe":
        return cls(kind=RecipeKind.FIR2, m=m, n=2, s=2, rho=rho, seed=seed)

    @classmethod
    def sec7(cls, m: int = 150, n: int = 5, s: int = 3, rho: float = 5.0, seed: int = 0) -> "Recipe":
        return cls(kind=RecipeKind.SEC7, m=m, n=n, s=s, rho=rho, seed=seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        return out


@dataclass
class GeneratedInstance:
    instance: ProblemInstance
    x_true: np.ndarray

    @property
    def z_true(self) -> np.ndarray:
        return self.instance.solution_matrix @ self.x_true


def _sec7_solution(n: int, s: int) -> np.ndarray:
    if (n, s) == (5, 3):
        return SEC7_SOLUTION.copy()
    return np.hstack([np.eye(s), np.zeros((s, n - s))])


def generate_instance(recipe: Recipe, stream_id: int = 0) -> GeneratedInstance:
    gen = RngStream(recipe.seed, stream_id).generator()
    if recipe.kind is RecipeKind.SEC7:
        m, n = recipe.m, recipe.n
        info = np.round(20.0 * gen.random((m, n)) - 10.0)
        noise = recipe.rho * (2.0 * gen.random(m) - 1.0)
        x_true = np.ones(n)
        if recipe.solution_matrix is not None:
            sol = np.asarray(recipe.solution_matrix, dtype=float)
        else:
            sol = _sec7_solution(n, recipe.s)
    else:
        m = recipe.m
        u = gen.standard_normal(m + 1)
        info = np.column_stack([u[1:], u[:-1]])
        noise = recipe.rho * (2.0 * gen.random(m) - 1.0)
        x_true = FIR2_TRUE.copy()
        sol = np.eye(2)
    inst = ProblemInstance(info, info @ x_true + noise, recipe.rho, "inf", sol)
    require_valid(inst)
    return GeneratedInstance(inst, x_true)


# --- run configuration -----------------------------------------------------

@dataclass
class ExperimentConfig:
    """Resolved settings for one CLI run.

    ``instance`` is an inline instance dict; otherwise ``recipe`` generates
    one.  ``r_min``/``r_max`` left as ``None`` span ``(r_wc / steps, r_wc]``.
    ``n_samples`` is the oracle budget for final center evaluations.
    """

    instance: dict | None = None
    recipe: Recipe | None = None
    epsilon: float = 0.1
    method: Method = Method.SPSA
    methods: list | None = None
    n_samples: int = 100_000
    seed: int = 0
    r_min: float | None = None
    r_max: float | None = None
    steps: int = 20
    trials: int = 500
    iterations: int = 500
    restarts: int = 3
    compare_iterations: int = 200
    volume_samples: int = 1_000_000
    bins: int = 30

    def __post_init__(self):
        self.method = Method.parse(self.method)
        if self.methods is not None:
            self.methods = [Method.parse(m) for m in self.methods]
        if isinstance(self.recipe, dict):
            self.recipe = Recipe(**self.recipe)
        if not 0.0 < float(self.epsilon) < 1.0:
            raise InvalidInstance(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.steps < 2:
            raise InvalidInstance("steps must be >= 2")
        if self.trials < 1:
            raise InvalidInstance("trials must be >= 1")
        if self.n_samples < 1:
            raise InvalidInstance("n_samples must be positive")
        if self.instance is None and self.recipe is None:
            self.recipe = Recipe()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise InvalidInstance(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def spsa(self, method: Method | None = None, compare: bool = False) -> SpsaConfig:
        return SpsaConfig(
            iterations=self.compare_iterations if compare else self.iterations,
            restarts=0 if compare else self.restarts,
            final_samples=self.n_samples,
            volume_samples=self.volume_samples,
            method=method or self.method,
        )

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "recipe": self.recipe.to_dict() if self.recipe is not None else None,
            "epsilon": float(self.epsilon),
            "method": self.method.value,
            "methods": [m.value for m in self.methods] if self.methods else None,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "steps": self.steps,
            "trials": self.trials,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "compare_iterations": self.compare_iterations,
            "volume_samples": self.volume_samples,
            "bins": self.bins,
        }


def resolve_instance(cfg: ExperimentConfig) -> GeneratedInstance | ProblemInstance:
    if cfg.instance is not None:
        inst = ProblemInstance.from_dict(cfg.instance)
        require_valid(inst)
        return inst
    return generate_instance(cfg.recipe)


def _unpack(source) -> tuple[ProblemInstance, np.ndarray | None]:
    if isinstance(source, GeneratedInstance):
        return source.instance, source.z_true
    return source, None


def run_estimate(cfg: ExperimentConfig) -> EstimateReport:
    inst, z_true = _unpack(resolve_instance(cfg))
    rep = probabilistic_radius(inst, cfg.epsilon, cfg.spsa(), RngStream(cfg.seed).child(1))
    if z_true is not None:
        rep.diagnostics["z_true"] = z_true.tolist()
    return rep


def run_curve(cfg: ExperimentConfig) -> dict[str, ViolationCurve]:
    """One curve per requested method over a shared radius grid."""
    inst, _ = _unpack(resolve_instance(cfg))
    _, r_wc, _ = worst_case_box(inst)
    r_min = cfg.r_min if cfg.r_min is not None else r_wc / cfg.steps
    r_max = cfg.r_max if cfg.r_max is not None else r_wc
    grid = np.linspace(r_min, r_max, cfg.steps)
    methods = cfg.methods or [cfg.method]
    rng = RngStream(cfg.seed).child(2)
    return {m.value: violation_curve(inst, grid, cfg.spsa(m), rng) for m in methods}


def curves_csv(curves: dict[str, ViolationCurve]) -> str:
    lines = ["r,v_hat,halfwidth,method"]
    for curve in curves.values():
        lines += curve.to_csv().splitlines()[1:]
    return "\n".join(lines) + "\n"


# --- comparison study ------------------------------------------------------

ESTIMATORS = ("ls", "wc", "pr")


@dataclass
class ComparisonSummary:
    """Mean and variance of each estimate and of its l-infinity error."""

    trials: int
    failures: int
    mean: dict
    variance: dict
    error_mean: dict
    error_variance: dict
    margins: dict
    errors: dict = field(default_factory=dict, repr=False)
    estimates: dict = field(default_factory=dict, repr=False)

    def histogram_csv(self, bins: int = 30) -> str:
        """Relative-frequency histograms of errors and estimate components on shared bins."""
        lines = ["estimator,quantity,bin_lower,bin_upper,frequency"]
        if self.trials == 0:
            return "\n".join(lines) + "\n"
        quantities = [("err", {k: np.asarray(v) for k, v in self.errors.items()})]
        dim = len(next(iter(self.mean.values())))
        for j in range(dim):
            quantities.append((f"z{j + 1}", {k: np.asarray(v)[:, j] for k, v in self.estimates.items()}))
        for name, data in quantities:
            pooled = np.concatenate(list(data.values()))
            edges = np.histogram_bin_edges(pooled, bins=bins)
            for est in ESTIMATORS:
                counts, _ = np.histogram(data[est], bins=edges)
                freq = counts / max(len(data[est]), 1)
                for lo, hi, f in zip(edges[:-1], edges[1:], freq):
                    lines.append(f"{est},{name},{float(lo)!r},{float(hi)!r},{float(f)!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "failures": self.failures,
            "mean": self.mean,
            "variance": self.variance,
            "error_mean": self.error_mean,
            "error_variance": self.error_variance,
            "margins": self.margins,
        }


def _trial(cfg: ExperimentConfig, spsa: SpsaConfig, t: int):
    gen = generate_instance(cfg.recipe, stream_id=t + 1)
    inst = gen.instance
    rep = probabilistic_radius(inst, cfg.epsilon, spsa, RngStream(cfg.seed, t + 1).child(1))
    return {"ls": rep.z_ls, "wc": rep.z_wc, "pr": rep.z_pr, "true": gen.z_true}


def _safe_trial(args):
    cfg, spsa, t = args
    try:
        return _trial(cfg, spsa, t)
    except RadiusKitError as exc:
        log.warning("trial %d failed: %s", t, exc)
        return None


def _moments(rows: np.ndarray) -> tuple[list, list]:
    ddof = 1 if rows.shape[0] > 1 else 0
    return rows.mean(axis=0).tolist(), rows.var(axis=0, ddof=ddof).tolist()


def _margin(worse: np.ndarray, better: np.ndarray) -> dict:
    """Paired difference of errors; the trials share instances."""
    diff = worse - better
    n = diff.shape[0]
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mean = float(diff.mean()) if n else 0.0
    return {"mean_difference": mean, "standard_error": se,
            "standard_errors": mean / se if se > 0 else None}


def run_comparison(cfg: ExperimentConfig) -> ComparisonSummary:
    """Least-squares, worst-case and probabilistic estimates over fresh Sec7-style trials."""
    if cfg.recipe is None:
        raise InvalidInstance("the comparison study needs a generator recipe")
    spsa = cfg.spsa(compare=True)
    results = parallel_map(_safe_trial, [(cfg, spsa, t) for t in range(cfg.trials)])
    done = [res for res in results if res is not None]
    failures = len(results) - len(done)
    if not done:
        raise RadiusKitError("every comparison trial failed")
    truth = np.array([res["true"] for res in done])
    estimates = {k: np.array([res[k] for res in done]) for k in ESTIMATORS}
    errors = {k: np.abs(v - truth).max(axis=1) for k, v in estimates.items()}
    mean, variance, err_mean, err_var = {}, {}, {}, {}
    for k in ESTIMATORS:
        mean[k], variance[k] = _moments(estimates[k])
        m, v = _moments(errors[k][:, None])
        err_mean[k], err_var[k] = m[0], v[0]
    margins = {"wc_minus_pr": _margin(errors["wc"], errors["pr"]),
               "ls_minus_wc": _margin(errors["ls"], errors["wc"])}
    return ComparisonSummary(
        trials=len(done), failures=failures, mean=mean, variance=variance,
        error_mean=err_mean, error_variance=err_var, margins=margins,
        errors={k: v.tolist() for k, v in errors.items()},
        estimates={k: v.tolist() for k, v in estimates.items()},
    )


def dumps(data) -> str:
    """Deterministic JSON text."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
