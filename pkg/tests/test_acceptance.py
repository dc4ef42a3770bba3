"""Acceptance criteria, one test per criterion.

Each test prints a single ``[criterion k] PASS|FAIL ...`` line with the
measured quantities.  Run alone with ``pytest tests/test_acceptance.py -v``; criteria 5 and 6
are marked ``slow`` and take several minutes each.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from radius_kit import (
    ExactPhi,
    ExperimentConfig,
    GaussianNoiseModel,
    ProblemInstance,
    Recipe,
    RngStream,
    SpsaConfig,
    average_radius,
    bound_multiplier,
    consistency_polytope,
    estimate_phi,
    generate_instance,
    phi_max,
    probabilistic_radius,
    regularize,
    run_comparison,
    run_estimate,
    sample_lp_ball,
    sdp_violation,
    solve_mve,
    violation_curve,
    worst_case_box,
)
from radius_kit.cli import main as cli_main
from radius_kit.model import NormP, lp_norm
from radius_kit.mve import _constraints

from conftest import hypercube, random_2d


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def exact_phi_o(phi: ExactPhi, box, r: float, points: int = 21, zooms: int = 4):
    """Exact optimum of phi(., r): zooming grid search, then a Nelder-Mead polish."""
    lower = np.asarray(box.lower) - r
    upper = np.asarray(box.upper) + r
    best_z, best = None, -1.0
    for _ in range(zooms):
        axes = [np.linspace(lo, hi, points) for lo, hi in zip(lower, upper)]
        for z in np.stack(np.meshgrid(*axes), -1).reshape(-1, len(axes)):
            val = phi(z, r)
            if val > best:
                best, best_z = val, z
        half = (upper - lower) / (points - 1) * 2
        lower, upper = best_z - half, best_z + half
    res = minimize(lambda z: -phi(z, r), best_z, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000})
    if -res.fun > best:
        best_z, best = res.x, -res.fun
    return best_z, best


# 1 -------------------------------------------------------------------------

def test_criterion_1_closed_form_violation_curve(report):
    t0 = time.perf_counter()
    cfg = SpsaConfig(iterations=200, restarts=1, final_samples=100_000)
    worst = {}
    for n in (2, 3):
        grid = np.linspace(0.06, 1.2, 20)
        curve = violation_curve(hypercube(n), grid, cfg, RngStream(n))
        exact = 1 - np.minimum(grid, 1.0) ** n
        worst[n] = float(np.max(np.abs([p.v_hat for p in curve.points] - exact)))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 0.02 and elapsed < 60
    report(1, ok, f"max |v_hat - (1 - r^n)|: n=2 {worst[2]:.1e}, n=3 {worst[3]:.1e} (tol 0.02); {elapsed:.1f}s (< 60s)")
    assert ok


# 2 -------------------------------------------------------------------------

def test_criterion_2_closed_form_inverse(report):
    t0 = time.perf_counter()
    errs = {}
    for n in (2, 3):
        rep = probabilistic_radius(hypercube(n), 0.1, SpsaConfig(), RngStream(10 + n))
        errs[n] = (rep.r_pr, abs(rep.r_pr - 0.9 ** (1 / n)))
    elapsed = time.perf_counter() - t0
    ok = all(e <= 0.01 for _, e in errs.values()) and elapsed < 120
    report(2, ok, f"r_pr n=2 {errs[2][0]:.4f} (0.9487), n=3 {errs[3][0]:.4f} (0.9655), "
                  f"max err {max(e for _, e in errs.values()):.4f} (tol 0.01); {elapsed:.1f}s (< 120s)")
    assert ok


# 3 -------------------------------------------------------------------------

def test_criterion_3_oracle_equivalence(report):
    cfg = SpsaConfig(iterations=300, restarts=2)
    gaps, covered, total = [], 0, 0
    for seed in range(50):
        inst = random_2d(1000 + seed)
        phi = ExactPhi(consistency_polytope(inst))
        _, r_wc, box = worst_case_box(inst)
        r = 0.4 * r_wc
        _, best = exact_phi_o(phi, box, r)
        z, _ = phi_max(inst, r, cfg, RngStream(seed))
        gaps.append(abs(phi(z, r) - best) / phi.volume_k)
        # Monte Carlo oracle against the exact one at several centers and radii
        reg = regularize(inst)
        gen = np.random.default_rng(seed)
        for j in range(5):
            zc = box.lower + (box.upper - box.lower) * gen.random(2)
            rr = r_wc * gen.uniform(0.1, 1.0)
            est = estimate_phi(reg, zc, rr, 20_000, RngStream(seed, j + 1), delta=0.05)
            total += 1
            covered += abs(est.value - phi(zc, rr)) <= est.confidence_halfwidth
    rate = covered / total
    ok = max(gaps) <= 0.02 and rate >= 0.94
    report(3, ok, f"max |phi_spsa - phi_exact| / vol K = {max(gaps):.4f} (tol 0.02); "
                  f"CP coverage {rate:.3f} over {total} evaluations (>= 0.94)")
    assert ok


# 4 -------------------------------------------------------------------------

def test_criterion_4_sdp_dominance(report):
    worst_margin, worst_resid, cases, bad = np.inf, np.inf, 0, 0
    for seed in range(50):
        inst = random_2d(2000 + seed)
        phi = ExactPhi(consistency_polytope(inst))
        _, r_wc, box = worst_case_box(inst)
        for frac in (0.2, 0.4, 0.6, 0.8, 1.0):
            r = frac * r_wc
            ell = solve_mve(inst, r)
            _, a, b, g = _constraints(inst, r)
            worst_resid = min(worst_resid, float(ell.residuals(a, b + g @ ell.cylinder_center).min()))
            v_sdp, _ = sdp_violation(inst, r)
            _, best = exact_phi_o(phi, box, r)
            v_o = 1 - best / phi.volume_k
            margin = v_sdp - v_o
            worst_margin = min(worst_margin, margin)
            cases += 1
            bad += margin < -1e-9
    ok = bad == 0 and worst_resid >= -1e-7
    report(4, ok, f"v_sdp >= v_o - 1e-9 in {cases - bad}/{cases} cases (min margin {worst_margin:.2e}); "
                  f"min ellipsoid residual {worst_resid:.2e} (>= -1e-7)")
    assert ok


# 5 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_ratio_bands(report):
    t0 = time.perf_counter()
    fir2 = []
    for seed in range(50):
        rep = run_estimate(ExperimentConfig(recipe=Recipe.fir2(seed=seed), seed=seed))
        fir2.append(rep.r_pr / rep.r_wc)
    sec7 = []
    for seed in range(20):
        rep = run_estimate(ExperimentConfig(recipe=Recipe.sec7(seed=seed), seed=seed))
        sec7.append(rep.r_pr / rep.r_wc)
    elapsed = time.perf_counter() - t0
    fir2, sec7 = np.array(fir2), np.array(sec7)
    fir2_in = float(np.mean((fir2 >= 0.70) & (fir2 <= 0.92)))
    sec7_in = float(np.mean((sec7 >= 0.40) & (sec7 <= 0.70)))
    ok = fir2_in >= 0.9 and sec7_in >= 0.9 and elapsed < 1200
    report(5, ok, f"Fir2 ratio in [0.70, 0.92]: {fir2_in:.2f} (mean {fir2.mean():.3f}, range {fir2.min():.3f}-{fir2.max():.3f}); "
                  f"Sec7 ratio in [0.40, 0.70]: {sec7_in:.2f} (mean {sec7.mean():.3f}); need >= 0.90 each; "
                  f"{elapsed:.0f}s (< 1200s)")
    assert ok


# 6 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_table_ordering(report):
    t0 = time.perf_counter()
    summary = run_comparison(ExperimentConfig(recipe=Recipe.sec7(), trials=500))
    elapsed = time.perf_counter() - t0
    err = summary.error_mean
    pr_wc = summary.margins["wc_minus_pr"]
    wc_ls = summary.margins["ls_minus_wc"]
    ok_pr = pr_wc["mean_difference"] >= 2 * pr_wc["standard_error"]
    ok_ls = wc_ls["mean_difference"] >= 2 * wc_ls["standard_error"]
    ok = ok_pr and ok_ls and elapsed < 600 and summary.trials >= 500
    report(6, ok, f"mean l-inf error pr {err['pr']:.4f}, wc {err['wc']:.4f}, ls {err['ls']:.4f}; "
                  f"wc - pr = {pr_wc['mean_difference']:.4f} ({pr_wc['standard_errors']:.2f} SE), "
                  f"ls - wc = {wc_ls['mean_difference']:.4f} ({wc_ls['standard_errors']:.2f} SE), need >= 2 SE; "
                  f"{summary.trials} trials, {summary.failures} failures; {elapsed:.0f}s (< 600s)")
    assert ok


# 7 -------------------------------------------------------------------------

def test_criterion_7_gauss_markov(report):
    worst = 0.0
    for seed in range(10):
        gen = np.random.default_rng(seed)
        m, n = int(gen.integers(6, 30)), int(gen.integers(2, 6))
        s = int(gen.integers(1, n + 1))
        info = gen.normal(size=(m, n))
        sol = gen.normal(size=(s, n))
        inst = ProblemInstance(info, np.zeros(m), 1.0, "inf", sol)
        sigma2 = float(gen.uniform(0.1, 2.0))
        noise = GaussianNoiseModel(np.zeros(m), sigma2)
        x_true = gen.normal(size=n)
        eta = math.sqrt(sigma2) * gen.standard_normal((100_000, m))
        x_ls = np.linalg.lstsq(info, (info @ x_true + eta).T, rcond=None)[0].T
        rms = math.sqrt(np.mean(np.sum(((x_ls - x_true) @ sol.T) ** 2, axis=1)))
        worst = max(worst, abs(rms / average_radius(inst, noise) - 1))
    mult_err = abs(bound_multiplier(0.1) - math.sqrt(2 * math.log(50)))
    ok = worst <= 0.02 and mult_err <= 1e-12
    report(7, ok, f"max relative RMS gap {worst:.4f} (tol 0.02); multiplier error {mult_err:.1e} (tol 1e-12)")
    assert ok


# 8 -------------------------------------------------------------------------

def test_criterion_8_structural_invariants(report, tmp_path, capsys):
    checks = {}

    # monotonicity of the raw curve within halfwidth slack
    inst = random_2d(77)
    _, r_wc, box = worst_case_box(inst)
    grid = np.linspace(0.05, 1.0, 12) * r_wc
    curve = violation_curve(inst, grid, SpsaConfig(iterations=200, restarts=1, final_samples=50_000), RngStream(7))
    raw = curve.diagnostics["raw_v_hat"]
    hws = [p.halfwidth for p in curve.points]
    checks["monotone"] = all(raw[i + 1] <= raw[i] + hws[i] + hws[i + 1] + 1e-12 for i in range(len(raw) - 1))

    # quasi-concavity witnesses with the exact oracle
    gen = np.random.default_rng(8)
    qc = True
    for seed in range(10):
        inst = random_2d(300 + seed)
        phi = ExactPhi(consistency_polytope(inst))
        _, r_wc, box = worst_case_box(inst)
        for _ in range(20):
            z1, z2 = (box.lower + (box.upper - box.lower) * gen.random((2, 2)))
            r = r_wc * gen.uniform(0.1, 0.8)
            lo = min(phi(z1, r), phi(z2, r))
            for lam in np.linspace(0, 1, 11):
                qc &= phi(lam * z1 + (1 - lam) * z2, r) >= lo - 1e-9
    checks["quasi_concave"] = bool(qc)

    # r_pr <= r_wc on every run
    fast = SpsaConfig(iterations=150, restarts=1, final_samples=20_000, volume_samples=200_000)
    runs = [probabilistic_radius(random_2d(400 + k), eps, fast, RngStream(k))
            for k, eps in enumerate((0.05, 0.1, 0.2, 0.4))]
    runs.append(probabilistic_radius(generate_instance(Recipe.sec7(seed=5)).instance, 0.1, fast, RngStream(5)))
    checks["r_pr_le_r_wc"] = all(r.r_pr <= r.r_wc for r in runs)

    # transform invariance under regularization
    gen = np.random.default_rng(9)
    info = gen.normal(size=(10, 3))
    sol = gen.normal(size=(2, 3))
    inst = ProblemInstance(info, info @ np.ones(3) + gen.uniform(-1, 1, 10), 1.0, "inf", sol)
    reg = regularize(inst)
    phi_o = ExactPhi(consistency_polytope(inst), sol)
    phi_r = ExactPhi(consistency_polytope(reg.base), reg.base.solution_matrix)
    _, r_wc, box = worst_case_box(inst)
    _, r_wc2, _ = worst_case_box(reg.base)
    inv = abs(phi_o.volume_k - phi_r.volume_k) <= 1e-6 * phi_o.volume_k and abs(r_wc - r_wc2) <= 1e-6 * r_wc
    for _ in range(10):
        z = box.lower + (box.upper - box.lower) * gen.random(2)
        a, b = phi_o(z, 0.5 * r_wc), phi_r(z, 0.5 * r_wc)
        inv &= abs(a - b) <= 1e-6 * max(phi_o.volume_k, 1e-300)
    checks["transform_invariance"] = bool(inv)

    # sampler uniformity: sub-ball fractions t^s within 3 binomial sigma
    uni = True
    count = 100_000
    for p in ("one", "two", "inf"):
        for dim in (2, 3, 5):
            pts = sample_lp_ball(np.zeros(dim), 1.0, p, RngStream(dim), count)
            norms = lp_norm(pts, NormP.parse(p))
            for t in (0.25, 0.5, 0.75, 0.9):
                q = t**dim
                uni &= abs(np.mean(norms <= t) - q) <= 3 * math.sqrt(q * (1 - q) / count)
    checks["sampler_uniformity"] = bool(uni)

    # byte-identical reports under a fixed seed
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(random_2d(5).to_dict()))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cli_main(["estimate", "--instance", str(path), "--seed", "3", "--iterations", "150", "--out", str(out)])
        outs.append((out / "report.json").read_bytes())
    capsys.readouterr()
    checks["byte_identical"] = outs[0] == outs[1]

    ok = all(checks.values())
    report(8, ok, ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok
