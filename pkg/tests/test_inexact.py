import math

import numpy as np
import pytest

from sketchgossip.duality import DualState, primal_from_dual, sdsa_step
from sketchgossip.errors import InvalidParameterError, PositiveDefinitenessError
from sketchgossip.inexact import (InexactnessSpec, cg_contraction, ibasic_step, inner_cg,
                                  inner_sketch_project, isdsa_step, sp_contraction,
                                  structured_rate, theta_for)
from sketchgossip.linalg import Spectrum
from sketchgossip.sketches import Coordinate, UniformBlock, f_S, lift, spectrum_of_W
from sketchgossip.solver import SolverConfig, SolverState, Stopping, basic_step, predicted_rate, run
from sketchgossip.trace import fit_decay

from conftest import gaussian, random_spd

def _spd5(seed):
    r = np.random.default_rng(seed)
    P = r.standard_normal((5, 5))
    return P @ P.T + 0.1 * np.eye(5), r.standard_normal(5)


def test_zero_error_is_basic_step(small_system):
    s, d = small_system, UniformBlock(3)
    a = SolverState.start(np.ones(5), np.random.default_rng(2))
    b = SolverState.start(np.ones(5), np.random.default_rng(2))
    spec = InexactnessSpec.bounded(0.0)
    for _ in range(40):
        a = ibasic_step(a, s, d, 1.2, spec)
        b = basic_step(b, s, d, 1.2)
        assert np.array_equal(a.x_curr, b.x_curr)


def test_many_inner_iterations_match_exact(small_system):
    s, d = small_system, UniformBlock(3)
    a = SolverState.start(np.ones(5), np.random.default_rng(2))
    b = SolverState.start(np.ones(5), np.random.default_rng(2))
    spec = InexactnessSpec.structured("cg", 50)
    for _ in range(40):
        a = ibasic_step(a, s, d, 1.0, spec)
        b = basic_step(b, s, d, 1.0)
        assert np.allclose(a.x_curr, b.x_curr, atol=1e-10)


def test_parameter_ranges():
    with pytest.raises(InvalidParameterError):
        InexactnessSpec.norm_proportional(0.5, rho=0.9)
    with pytest.raises(InvalidParameterError):
        InexactnessSpec.norm_proportional(-0.1)
    with pytest.raises(InvalidParameterError):
        InexactnessSpec.function_proportional(1.0, omega=1.0)
    with pytest.raises(InvalidParameterError):
        InexactnessSpec.structured("jacobi", 2)
    assert InexactnessSpec.bounded(("geometric", 2.0, 0.5)).sigma_at(3) == 0.25


def test_bounded_error_has_exact_norm(weighted_system):
    s = weighted_system
    st0 = SolverState.start(np.zeros(s.n), np.random.default_rng(0))
    nxt = ibasic_step(st0, s, Coordinate.uniform(s.m), 1.0, InexactnessSpec.bounded(0.3))
    assert s.B.norm(nxt.info["error"]) == pytest.approx(0.3)


def test_norm_proportional_rate():
    s = gaussian(40, 15, 21)
    d = Coordinate.uniform(40)
    rho = predicted_rate(spectrum_of_W(s, d)).rho
    q = 0.5 * (1 - math.sqrt(rho))
    cfg = SolverConfig("inexact", inexact=InexactnessSpec.norm_proportional(q, rho=rho))
    K, trials = 400, 100
    acc = np.zeros(K + 1)
    for t in range(trials):
        acc += run(s, d, cfg, stopping=Stopping(K), trial=t).series("rel_error")[1]
    fit = fit_decay(np.arange(K + 1), acc / trials, K // 4)
    assert fit <= (math.sqrt(rho) + q) ** 2 + 0.02


def test_cg_finite_termination_and_zero_rhs():
    M, d = _spd5(0)
    assert np.allclose(inner_cg(M, d, 5), np.linalg.solve(M, d), atol=1e-10)
    assert np.array_equal(inner_cg(M, np.zeros(5), 3), np.zeros(5))


def test_cg_rejects_singular():
    with pytest.raises(PositiveDefinitenessError, match="sketch-and-project"):
        inner_cg(np.diag([1.0, 0.0]), np.ones(2), 2)


def _cg_ratio(seed, r):
    M, d = _spd5(seed)
    ls = np.linalg.solve(M, d)
    e = inner_cg(M, d, r) - ls
    ev = np.linalg.eigvalsh(M)
    s = math.sqrt(ev[-1] / ev[0])
    return float(e @ M @ e) / float(ls @ M @ ls), (s - 1) / (s + 1)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_cg_classical_worst_case_bound(r):
    for seed in range(50):
        ratio, c = _cg_ratio(seed, r)
        assert ratio <= 4 * c ** (2 * r) * (1 + 1e-9)


@pytest.mark.xfail(strict=True, reason="the fourth-power-per-iteration CG bound is violated on "
                   "most random 5x5 SPD matrices; the classical bound 4 c^(2r) holds")
def test_cg_fourth_power_bound():
    for seed in range(50):
        for r in (1, 2, 3, 4):
            ratio, c = _cg_ratio(seed, r)
            assert ratio <= c ** (4 * r) * (1 + 1e-9)


def test_cg_residual_energy_monotone():
    M, d = _spd5(3)
    ls = np.linalg.solve(M, d)
    errs = [float((inner_cg(M, d, r) - ls) @ M @ (inner_cg(M, d, r) - ls)) for r in range(6)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_inner_sketch_project_basics():
    rng = np.random.default_rng(0)
    assert np.array_equal(inner_sketch_project(np.eye(3), np.ones(3), 0, rng), np.zeros(3))
    # identity: each visited coordinate becomes exact
    lam = inner_sketch_project(np.eye(4), np.arange(4.0), 200, rng)
    assert np.allclose(lam, np.arange(4.0))


def test_inner_sketch_project_contraction():
    M = random_spd(6, 2).to_dense()
    d = M @ np.random.default_rng(1).standard_normal(6)
    ls = np.linalg.solve(M, d)
    K, trials = 60, 400
    acc = np.zeros(K + 1)
    for t in range(trials):
        for k in range(K + 1):
            lam = inner_sketch_project(M, d, k, np.random.default_rng(t))
            acc[k] += float((lam - ls) @ (lam - ls))
    fit = fit_decay(np.arange(K + 1), acc / trials, 0)
    assert fit <= sp_contraction(M) + 0.05


def test_structured_rate_examples():
    sp = Spectrum.from_eigenvalues([1.0, 0.4])
    assert structured_rate(sp, 0.25, 2) == pytest.approx(0.625)
    assert structured_rate(sp, 0.5, 0) == pytest.approx(1.0)
    assert structured_rate(sp, 0.5, 200) == pytest.approx(0.6)
    assert 0 < cg_contraction(np.diag([1.0, 4.0])) == pytest.approx((1 / 3) ** 4)


def test_theta_is_worst_over_support(small_system):
    s = small_system
    from sketchgossip.sketches import FixedSets
    d = FixedSets.uniform([[0, 1, 2], [3, 4, 5], [5, 6, 7]])
    th = theta_for(s, d, "cg")
    assert th == pytest.approx(max(cg_contraction(s.gram[np.ix_(S, S)]) for S in d.sets))


@pytest.mark.parametrize("inner", ["cg", "sp"])
def test_structured_error_identities(weighted_system, inner):
    s = weighted_system
    d = UniformBlock(3)
    spec = InexactnessSpec.structured(inner, 1)
    x_star = s.project(np.zeros(s.n))
    st0 = SolverState.start(np.zeros(s.n), np.random.default_rng(5))
    for _ in range(30):
        x = st0.x_curr
        nxt = ibasic_step(st0, s, d, 1.0, spec)
        S, info = nxt.last_sketch, nxt.info
        eps = info["error"]
        lam_s, lam_r, M = info["lam_star"], info["lam_r"], info["M"]
        exact = x + lift(s, S, lam_s)
        assert abs(s.B.inner(exact - x_star, eps)) <= 1e-9
        dl = lam_r - lam_s
        assert s.B.norm_sq(eps) == pytest.approx(float(dl @ M @ dl), rel=1e-9, abs=1e-12)
        assert float(lam_s @ M @ lam_s) == pytest.approx(2 * f_S(s, S, x), rel=1e-9, abs=1e-12)
        st0 = nxt


def test_isdsa_matches_ibasic_with_matched_errors(weighted_system):
    s = weighted_system
    d = UniformBlock(2)
    x0 = np.ones(s.n)
    xs = SolverState.start(x0, np.random.default_rng(3))
    ys = DualState.start(s, x0, np.random.default_rng(3))
    err_rng = np.random.default_rng(4)
    spec = InexactnessSpec.bounded(0.1)
    for _ in range(100):
        eps_d = 0.05 * err_rng.standard_normal(s.m)
        ys = isdsa_step(ys, s, d, 1.0, spec, error=eps_d)
        xs = ibasic_step(xs, s, d, 1.0, spec, error=s.BinvAt @ eps_d)
        assert np.allclose(primal_from_dual(s, x0, ys.y_curr), xs.x_curr, atol=1e-10)
    zero = isdsa_step(DualState.start(s, x0, np.random.default_rng(1)), s, d, 1.0,
                      InexactnessSpec.bounded(0.0))
    exact = sdsa_step(DualState.start(s, x0, np.random.default_rng(1)), s, d, 1.0)
    assert np.array_equal(zero.y_curr, exact.y_curr)


def test_isdsa_suboptimality_rate():
    s = gaussian(40, 15, 21)
    d = Coordinate.uniform(40)
    rho = predicted_rate(spectrum_of_W(s, d)).rho
    q = 0.5 * (1 - math.sqrt(rho))
    x0 = np.zeros(15)
    spec = InexactnessSpec.norm_proportional(q, rho=rho).with_solution(s.project(x0))
    K, trials = 400, 100
    acc = np.zeros(K + 1)
    for t in range(trials):
        st0 = DualState.start(s, x0, np.random.default_rng(t))
        for k in range(K + 1):
            if k:
                st0 = isdsa_step(st0, s, d, 1.0, spec)
            acc[k] += 0.5 * s.B.norm_sq(primal_from_dual(s, x0, st0.y_curr) - spec.x_star)
    fit = fit_decay(np.arange(K + 1), acc / trials, K // 4)
    assert fit <= (math.sqrt(rho) + q) ** 2 + 0.02
