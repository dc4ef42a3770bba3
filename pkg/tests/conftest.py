import numpy as np
import pytest

from radius_kit import ProblemInstance


def hypercube(n: int, p: str = "inf") -> ProblemInstance:
    return ProblemInstance(np.eye(n), np.zeros(n), 1.0, p, np.eye(n))


def random_2d(seed: int, m: int = 8, rho: float = 1.0) -> ProblemInstance:
    """Random bounded-noise instance in the plane with identity solution operator."""
    gen = np.random.default_rng(seed)
    info = gen.normal(size=(m, 2))
    x = gen.normal(size=2)
    y = info @ x + rho * gen.uniform(-1.0, 1.0, m)
    return ProblemInstance(info, y, rho, "inf", np.eye(2))


@pytest.fixture
def square():
    return hypercube(2)


@pytest.fixture
def cube():
    return hypercube(3)


def grid_phi_max(phi, lower, upper, r, points: int = 41, zooms: int = 6):
    """Exact-oracle maximum of phi(., r) by grid search with successive zooming.

    phi is quasi-concave, so shrinking the window around the best grid
    point converges to the global maximum.
    """
    lower = np.asarray(lower, dtype=float) - r
    upper = np.asarray(upper, dtype=float) + r
    best_z, best = None, -1.0
    for _ in range(zooms):
        axes = [np.linspace(lo, hi, points) for lo, hi in zip(lower, upper)]
        for z in np.stack(np.meshgrid(*axes), -1).reshape(-1, len(axes)):
            val = phi(z, r)
            if val > best:
                best, best_z = val, z
        half = (upper - lower) / (points - 1) * 2
        lower, upper = best_z - half, best_z + half
    return best_z, best
