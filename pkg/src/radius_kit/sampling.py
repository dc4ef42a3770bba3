"""Seeded streams and uniform samplers for l_p balls, boxes and bounded cylinders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInstance
from .model import NormP, lp_norm


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator; the key is expanded by
    ``numpy.random.SeedSequence`` so distinct ids give independent streams.
    ``subkey`` addresses children without colliding with sibling ids.
    """

    seed: int
    stream_id: int = 0
    subkey: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) % 2**64,
                                    spawn_key=(int(self.stream_id) % 2**64, *self.subkey))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, (*self.subkey, int(index)))

    def to_dict(self) -> dict:
        return {"seed": int(self.seed), "stream_id": int(self.stream_id), "subkey": list(self.subkey)}


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


def sample_gamma(a: float, b: float, rng, count: int) -> np.ndarray:
    """iid draws from the unilateral Gamma density with shape ``a`` and scale ``b``."""
    if not (a > 0 and b > 0):
        raise InvalidInstance("Gamma parameters must be positive")
    return b * _gen(rng).standard_gamma(a, size=count)


def unit_ball_samples(dim: int, p: NormP, gen: np.random.Generator, count: int) -> np.ndarray:
    """Uniform samples in the unit l_p ball of R^dim, shape (count, dim)."""
    p = NormP.parse(p)
    if p is NormP.INF:
        return gen.uniform(-1.0, 1.0, size=(count, dim))
    order = p.order
    gamma = gen.standard_gamma(1.0 / order, size=(count, dim))
    signs = np.where(gen.random((count, dim)) < 0.5, -1.0, 1.0)
    eta = signs * gamma ** (1.0 / order)
    radial = gen.random(count) ** (1.0 / dim)
    return eta * (radial / lp_norm(eta, p))[:, None]


def sample_lp_ball(center, radius: float, p, rng, count: int) -> np.ndarray:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if not radius > 0:
        raise InvalidInstance("ball radius must be positive")
    unit = unit_ball_samples(center.shape[0], NormP.parse(p), _gen(rng), count)
    return center + radius * unit


def sample_box(lower, upper, rng, count: int) -> np.ndarray:
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    return lower + (upper - lower) * _gen(rng).random((count, lower.shape[0]))


def lp_ball_volume(dim: int, radius: float, p: NormP) -> float:
    p = NormP.parse(p)
    if p is NormP.INF:
        return (2.0 * radius) ** dim
    order = p.order
    log_ratio = dim * math.lgamma(1.0 / order + 1.0) - math.lgamma(dim / order + 1.0)
    return (2.0 * radius) ** dim * math.exp(log_ratio)


@dataclass(frozen=True)
class BoundedCylinder:
    """``{x : ||S_bar x_head - z||_p <= r, free_lower <= x_tail <= free_upper}``."""

    center: np.ndarray
    radius: float
    s_bar: np.ndarray
    free_lower: np.ndarray
    free_upper: np.ndarray
    norm_p: NormP

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "s_bar", np.atleast_2d(np.asarray(self.s_bar, dtype=float)))
        object.__setattr__(self, "free_lower", np.atleast_1d(np.asarray(self.free_lower, dtype=float)).ravel())
        object.__setattr__(self, "free_upper", np.atleast_1d(np.asarray(self.free_upper, dtype=float)).ravel())
        object.__setattr__(self, "norm_p", NormP.parse(self.norm_p))
        if np.any(self.free_lower > self.free_upper):
            raise InvalidInstance("free_lower must not exceed free_upper")
        if not self.radius > 0:
            raise InvalidInstance("cylinder radius must be positive")

    @property
    def s(self) -> int:
        return self.center.shape[0]

    @property
    def n(self) -> int:
        return self.s + self.free_lower.shape[0]


def sample_cylinder(cyl: BoundedCylinder, rng, count: int) -> np.ndarray:
    gen = _gen(rng)
    zeta = cyl.center + cyl.radius * unit_ball_samples(cyl.s, cyl.norm_p, gen, count)
    head = np.linalg.solve(cyl.s_bar, zeta.T).T
    tail = cyl.free_lower + (cyl.free_upper - cyl.free_lower) * gen.random((count, cyl.free_lower.shape[0]))
    return np.hstack([head, tail])


def cylinder_volume(cyl: BoundedCylinder) -> float:
    base = lp_ball_volume(cyl.s, cyl.radius, cyl.norm_p)
    return base / abs(np.linalg.det(cyl.s_bar)) * float(np.prod(cyl.free_upper - cyl.free_lower))
