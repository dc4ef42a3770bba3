"""Probabilistic radius of information for bounded-noise estimation.

Data ``y = I x + eta`` with ``|eta|_p <= rho`` and a target ``z = S x``.
Under uniform noise the consistency set ``K`` carries the uniform measure, and
the probabilistic radius at level ``eps`` is the smallest ``r`` such that a
cylinder of radius ``r`` around some ``z`` misses at most a fraction ``eps``
of ``K``.
"""

from .errors import (
    DimensionTooLarge,
    EmptyCylinder,
    EmptyH,
    Infeasible,
    InfeasibleIntersection,
    InputError,
    InvalidEpsilon,
    InvalidInstance,
    NumericalError,
    NumericalFailure,
    RadiusKitError,
    RankDeficient,
    SingularNormalEquations,
    TooManyFacets,
    Unbounded,
    UnsupportedNorm,
)
from .experiments import (
    ComparisonSummary,
    ExperimentConfig,
    GeneratedInstance,
    Recipe,
    generate_instance,
    run_comparison,
    run_curve,
    run_estimate,
)
from .gaussian import GaussianNoiseModel, average_radius, bound_multiplier, gaussian_radius_bound, least_squares
from .lp import chebyshev_center, solve_lp, worst_case_box
from .model import (
    HPolytope,
    NormP,
    ProblemInstance,
    RegularizedProblem,
    consistency_ellipsoid,
    consistency_polytope,
    regularize,
    validate,
)
from .mve import InscribedEllipsoid, sdp_violation, solve_mve
from .optimizer import (
    EstimateReport,
    Method,
    SpsaConfig,
    ViolationCurve,
    interpolatory_constrained_radius,
    phi_max,
    probabilistic_radius,
    violation_at,
    violation_curve,
)
from .sampling import BoundedCylinder, RngStream, sample_cylinder, sample_lp_ball
from .volume import ExactPhi, VolumeEstimate, estimate_phi, exact_phi_2d3d

__version__ = "0.1.0"
