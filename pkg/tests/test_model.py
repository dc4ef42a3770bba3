import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radius_kit import (
    InvalidInstance,
    NormP,
    ProblemInstance,
    RankDeficient,
    SingularNormalEquations,
    consistency_ellipsoid,
    consistency_polytope,
    regularize,
    validate,
)
from radius_kit.experiments import SEC7_SOLUTION
from radius_kit.model import lp_norm, weighted_least_squares

from conftest import hypercube, random_2d


def test_norm_parse_accepts_aliases():
    assert NormP.parse("inf") is NormP.INF
    assert NormP.parse(2) is NormP.TWO
    assert NormP.parse("1") is NormP.ONE
    with pytest.raises(Exception):
        NormP.parse("3")


def test_validate_reports_dimension_and_rank_failures():
    ok = hypercube(2)
    assert validate(ok).passed
    bad = ProblemInstance(np.ones((3, 2)), np.zeros(3), 1.0, "inf", np.eye(2))
    rep = validate(bad)
    assert not rep.passed and rep.rank_info == 1
    tall_s = ProblemInstance(np.eye(2), np.zeros(2), 1.0, "inf", np.ones((3, 2)))
    assert not validate(tall_s).passed
    neg = ProblemInstance(np.eye(2), np.zeros(2), -1.0, "inf", np.eye(2))
    assert any("noise_radius" in f for f in validate(neg).failures)


def test_instance_json_round_trip():
    inst = random_2d(0)
    back = ProblemInstance.from_json(inst.to_json())
    assert np.array_equal(back.info_matrix, inst.info_matrix)
    assert np.array_equal(back.data, inst.data)
    assert back.norm_p is inst.norm_p
    with pytest.raises(InvalidInstance):
        ProblemInstance.from_dict({"data": [0.0]})


def test_regularize_identity_when_already_split():
    inst = ProblemInstance(np.eye(3), np.zeros(3), 1.0, "inf", np.array([[2.0, 0, 0], [0, 1.0, 0]]))
    reg = regularize(inst)
    assert np.array_equal(reg.transform, np.eye(3))
    assert np.allclose(reg.s_bar, [[2.0, 0], [0, 1.0]])


def test_regularize_rank_deficient_solution_operator():
    inst = ProblemInstance(np.eye(3), np.zeros(3), 1.0, "inf", np.array([[1.0, 1, 0], [2.0, 2, 0]]))
    with pytest.raises(RankDeficient):
        regularize(inst)


def test_regularize_sec7_operator_is_orthogonal_split():
    gen = np.random.default_rng(3)
    info = np.round(20 * gen.random((20, 5)) - 10)
    inst = ProblemInstance(info, gen.normal(size=20), 5.0, "inf", SEC7_SOLUTION)
    reg = regularize(inst)
    t = reg.transform
    assert np.allclose(t.T @ t, np.eye(5), atol=1e-12)
    assert np.allclose(SEC7_SOLUTION @ t, reg.base.solution_matrix, atol=1e-10)
    assert np.allclose(reg.base.solution_matrix[:, 3:], 0.0)
    assert abs(abs(np.linalg.det(reg.s_bar)) - np.sqrt(np.linalg.det(SEC7_SOLUTION @ SEC7_SOLUTION.T))) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_regularize_preserves_membership(seed):
    gen = np.random.default_rng(seed)
    info = gen.normal(size=(6, 3))
    sol = gen.normal(size=(2, 3))
    inst = ProblemInstance(info, gen.normal(size=6), 1.0 + gen.random(), "inf", sol)
    reg = regularize(inst)
    x = gen.normal(size=(50, 3)) * 2.0
    xt = reg.from_original(x)
    assert np.array_equal(inst.contains(x, 1e-9), reg.base.contains(xt, 1e-9))
    assert np.allclose(x @ sol.T, xt @ reg.base.solution_matrix.T, atol=1e-9)


def test_polytope_inf_rows_and_membership():
    inst = random_2d(4)
    poly = consistency_polytope(inst)
    assert poly.a_matrix.shape == (16, 2)
    pts = np.random.default_rng(0).normal(size=(200, 2)) * 3
    assert np.array_equal(poly.contains(pts, 0.0), inst.contains(pts))


def test_polytope_one_norm_matches_definition():
    gen = np.random.default_rng(1)
    info = gen.normal(size=(4, 2))
    inst = ProblemInstance(info, gen.normal(size=4), 2.0, "one", np.eye(2))
    poly = consistency_polytope(inst)
    assert poly.a_matrix.shape[0] == 2**4
    pts = gen.normal(size=(500, 2)) * 3
    direct = np.abs(pts @ info.T - inst.data).sum(axis=1) <= 2.0
    assert np.array_equal(poly.contains(pts, 0.0), direct)


def test_lp_norm_values():
    v = np.array([3.0, -4.0])
    assert lp_norm(v, NormP.ONE) == 7.0
    assert lp_norm(v, NormP.TWO) == 5.0
    assert lp_norm(v, NormP.INF) == 4.0


def test_weighted_least_squares_matches_normal_equations():
    gen = np.random.default_rng(5)
    info = gen.normal(size=(12, 3))
    y = gen.normal(size=12)
    w = np.diag(gen.uniform(0.5, 2.0, 12))
    got = weighted_least_squares(info, y, w)
    want = np.linalg.solve(info.T @ w @ info, info.T @ w @ y)
    assert np.allclose(got, want, atol=1e-10)
    with pytest.raises(SingularNormalEquations):
        weighted_least_squares(np.ones((4, 2)), np.zeros(4))


def test_consistency_ellipsoid_matches_definition():
    gen = np.random.default_rng(6)
    info = gen.normal(size=(6, 2))
    x = gen.normal(size=2)
    y = info @ x + 0.2 * gen.normal(size=6)
    inst = ProblemInstance(info, y, 1.5, "two", np.eye(2))
    center, shape = consistency_ellipsoid(inst)
    pts = center + gen.normal(size=(2000, 2))
    inside_shape = np.einsum("ij,jk,ik->i", pts - center, shape, pts - center) <= 1.0
    inside_def = np.linalg.norm(pts @ info.T - y, axis=1) <= 1.5
    assert np.mean(inside_shape == inside_def) > 0.999
