import math

import numpy as np
import pytest

from radius_kit import (
    EmptyH,
    ExactPhi,
    InvalidEpsilon,
    InvalidInstance,
    ProblemInstance,
    RngStream,
    SpsaConfig,
    UnsupportedNorm,
    consistency_polytope,
    interpolatory_constrained_radius,
    phi_max,
    probabilistic_radius,
    violation_at,
    violation_curve,
    worst_case_box,
)
from radius_kit.experiments import Recipe, generate_instance
from radius_kit.lp import in_image
from radius_kit.optimizer import _context

from conftest import grid_phi_max, hypercube, random_2d

FAST = SpsaConfig(iterations=150, restarts=1, final_samples=20_000, volume_samples=200_000)


def test_config_validation():
    with pytest.raises(InvalidInstance):
        SpsaConfig(alpha_exp=0.4)
    with pytest.raises(InvalidInstance):
        SpsaConfig(iterations=0)
    with pytest.raises(InvalidInstance):
        SpsaConfig(oracle="grid")
    cfg = SpsaConfig(iterations=300)
    assert cfg.stability == 30
    esc = cfg.escalated()
    assert esc.samples_per_eval == 4 * cfg.samples_per_eval and esc.final_samples == 4 * cfg.final_samples


@pytest.mark.parametrize("n", [2, 3])
def test_hypercube_violation_closed_form(n):
    inst = hypercube(n)
    for r in (0.3, 0.6, 0.9):
        v, hw = violation_at(inst, r, FAST, RngStream(n))
        assert v == pytest.approx(1 - r**n, abs=0.02)
        assert hw < 0.02


def test_hypercube_violation_exact_method():
    v, hw = violation_at(hypercube(2), 0.5, SpsaConfig(method="exact", iterations=100, restarts=0), 0)
    assert v == pytest.approx(0.75, abs=1e-6) and hw == 0.0


def test_shortcut_at_worst_case_radius():
    v, hw = violation_at(random_2d(2), 10.0, FAST, 0)
    assert v == 0.0 and hw == 0.0


def test_phi_max_matches_exact_grid_search():
    for seed in range(4):
        inst = random_2d(seed, m=8, rho=1.0)
        phi = ExactPhi(consistency_polytope(inst))
        _, _, box = worst_case_box(inst)
        r = 0.4 * float(np.max(box.halfwidth))
        _, best = grid_phi_max(phi, box.lower, box.upper, r)
        z, _ = phi_max(inst, r, SpsaConfig(iterations=300, restarts=2), RngStream(seed))
        assert phi(z, r) >= best - 0.02 * phi.volume_k


def test_pool_and_cylinder_oracles_agree():
    gen = np.random.default_rng(0)
    info = gen.normal(size=(12, 3))
    inst = ProblemInstance(info, info @ np.ones(3) + gen.uniform(-1, 1, 12), 1.0, "inf",
                           np.array([[1.0, 0.5, 0.0], [0.0, 1.0, -1.0]]))
    _, r_wc, _ = worst_case_box(inst)
    r = 0.5 * r_wc
    vals = {}
    for oracle in ("cylinder", "pool"):
        cfg = SpsaConfig(iterations=300, restarts=1, final_samples=100_000, volume_samples=400_000, oracle=oracle)
        vals[oracle] = violation_at(inst, r, cfg, RngStream(1))
    (v1, h1), (v2, h2) = vals["cylinder"], vals["pool"]
    assert abs(v1 - v2) <= h1 + h2 + 0.02


def test_auto_oracle_selection():
    square = hypercube(2)
    assert _context(square).mode(SpsaConfig(), RngStream(0)) == "cylinder"
    sec7 = generate_instance(Recipe.sec7(seed=0)).instance
    cfg = SpsaConfig(volume_samples=200_000)
    assert _context(sec7).mode(cfg, RngStream(0)) == "pool"
    assert _context(sec7).mode(SpsaConfig(method="exact"), RngStream(0)) == "exact"


def test_curve_is_monotone_and_serializable():
    inst = random_2d(3)
    _, r_wc, _ = worst_case_box(inst)
    grid = np.linspace(0.1, 1.0, 6) * r_wc
    curve = violation_curve(inst, grid, FAST, RngStream(0))
    vals = [p.v_hat for p in curve.points]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0
    text = curve.to_csv()
    assert text.splitlines()[0] == "r,v_hat,halfwidth,method" and len(text.splitlines()) == 7
    with pytest.raises(InvalidInstance):
        violation_curve(inst, [0.3, 0.2], FAST)


@pytest.mark.parametrize("n", [2, 3])
def test_hypercube_probabilistic_radius(n):
    rep = probabilistic_radius(hypercube(n), 0.1, FAST, RngStream(5))
    assert rep.r_pr == pytest.approx(0.9 ** (1 / n), abs=0.01)
    assert rep.r_pr <= rep.r_wc
    assert np.allclose(rep.z_pr, 0.0, atol=0.05)
    d = rep.to_dict()
    assert d["ratio"] == pytest.approx(rep.r_pr / rep.r_wc)
    assert d["diagnostics"]["bisection"]


def test_disk_probabilistic_radius():
    """Unit disk with l2 noise: the cylinder is a disk too, so v(r) = 1 - r^2."""
    rep = probabilistic_radius(hypercube(2, "two"), 0.1, FAST, RngStream(1))
    assert rep.r_wc == pytest.approx(1.0)
    assert rep.r_pr == pytest.approx(math.sqrt(0.9), abs=0.01)


def test_interpolatory_radius_is_not_smaller():
    inst = random_2d(6)
    free = probabilistic_radius(inst, 0.1, FAST, RngStream(2))
    constrained = interpolatory_constrained_radius(inst, 0.1, FAST, RngStream(2))
    assert constrained.r_pr >= free.r_pr - 0.02 * free.r_wc
    assert in_image(inst, constrained.z_pr, tol=1e-6)


def test_errors():
    with pytest.raises(InvalidEpsilon):
        probabilistic_radius(hypercube(2), 1.0, FAST)
    one = ProblemInstance(np.eye(2), np.zeros(2), 1.0, "one", np.eye(2))
    with pytest.raises(UnsupportedNorm):
        probabilistic_radius(one, 0.1, FAST)
    empty = ProblemInstance(np.array([[1.0], [1.0]]), np.array([0.0, 5.0]), 1.0, "inf", np.eye(1))
    with pytest.raises(EmptyH):
        phi_max(empty, 0.5, FAST)
    with pytest.raises(InvalidInstance):
        phi_max(hypercube(2), -1.0, FAST)


def test_reports_are_reproducible():
    a = probabilistic_radius(random_2d(8), 0.2, FAST, RngStream(3)).to_dict()
    b = probabilistic_radius(random_2d(8), 0.2, FAST, RngStream(3)).to_dict()
    assert a == b
