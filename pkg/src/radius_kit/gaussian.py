"""Closed-form baselines for Gaussian noise: Gauss-Markov estimate and average radius."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidEpsilon, InvalidInstance
from .model import ProblemInstance, _weighted_factor, weighted_least_squares


@dataclass(frozen=True)
class GaussianNoiseModel:
    mean: np.ndarray
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise InvalidInstance("noise variance must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def precision(self, m: int) -> np.ndarray:
        return np.eye(m) / self.variance


def least_squares(inst: ProblemInstance, weight: np.ndarray | None = None) -> np.ndarray:
    """``(I^T W I)^{-1} I^T W y`` via QR of ``W^{1/2} I``; identity weight by default."""
    return weighted_least_squares(inst.info_matrix, inst.data, weight)


def average_radius(inst: ProblemInstance, noise: GaussianNoiseModel) -> float:
    """``sqrt(trace(S (I^T Sigma^{-1} I)^{-1} S^T))``; does not depend on the data."""
    r, _ = _weighted_factor(inst.info_matrix, noise.precision(inst.m))
    # S (R^T R)^{-1} S^T = (S R^{-1})(S R^{-1})^T
    sr = np.linalg.solve(r.T, inst.solution_matrix.T).T
    return float(np.linalg.norm(sr, "fro"))


def bound_multiplier(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    return math.sqrt(2.0 * math.log(5.0 / epsilon))


def gaussian_radius_bound(inst: ProblemInstance, noise: GaussianNoiseModel, epsilon: float) -> float:
    return bound_multiplier(epsilon) * average_radius(inst, noise)
