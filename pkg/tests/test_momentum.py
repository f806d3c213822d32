import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from sketchgossip.errors import InvalidInputError, InvalidParameterError, RateUndefinedError, UnsupportedGeometryError
from sketchgossip.linalg import SpdMatrix, Spectrum, pseudoinverse, range_basis
from sketchgossip.momentum import (AccState, acc_params, acc_params_for, acc_spectrum, acc_step,
                                   admissible_beta_bound, cesaro_average, cesaro_bound,
                                   momentum_rate, momentum_step, nu_exact, operation_count,
                                   option_one_gamma, smc_vs_mc_complexity,
                                   stochastic_momentum_rate, stochastic_momentum_step)
from sketchgossip.sketches import Coordinate, expected_Z, spectrum_of_W
from sketchgossip.solver import SolverConfig, SolverState, Stopping, basic_step, run, run_batch
from sketchgossip.system import LinearSystem
from sketchgossip.trace import fit_decay

from conftest import gaussian


def _pair(seed=0):
    return np.random.default_rng(seed), np.random.default_rng(seed)


def test_beta_zero_reduces_to_basic_bitwise():
    s = gaussian(8, 5, 1)
    d = Coordinate.uniform(8)
    r1, r2 = _pair(3)
    a = SolverState.start(np.ones(5), r1)
    b = SolverState.start(np.ones(5), r2)
    for _ in range(50):
        a = momentum_step(a, s, d, 1.0, 0.0)
        b = basic_step(b, s, d, 1.0)
        assert np.array_equal(a.x_curr, b.x_curr)


def test_stochastic_gamma_zero_and_equal_prev_reduce_to_basic():
    s = gaussian(8, 5, 1)
    d = Coordinate.uniform(8)
    r1, r2 = _pair(4)
    a = SolverState.start(np.ones(5), r1)
    b = SolverState.start(np.ones(5), r2)
    aux = np.random.default_rng(0)
    for _ in range(50):
        a = stochastic_momentum_step(a, s, d, 1.0, 0.0, aux)
        b = basic_step(b, s, d, 1.0)
        assert np.array_equal(a.x_curr, b.x_curr)
    # x = x_prev: the momentum coordinate adds exactly zero
    c = SolverState.start(np.ones(5), np.random.default_rng(7))
    e = SolverState.start(np.ones(5), np.random.default_rng(7))
    c = stochastic_momentum_step(c, s, d, 1.0, 3.0, aux)
    e = basic_step(e, s, d, 1.0)
    assert np.array_equal(c.x_curr, e.x_curr)


def test_mrk_row_formula_and_fixed_point():
    s = gaussian(6, 4, 2)
    d = Coordinate.uniform(6)
    st0 = SolverState(np.ones(4), np.zeros(4), 3, np.random.default_rng(0))
    nxt = momentum_step(st0, s, d, 0.8, 0.3)
    i = int(nxt.last_sketch[0])
    a = s.A[i]
    expect = np.ones(4) - 0.8 * (a @ np.ones(4) - s.b[i]) / (a @ a) * a + 0.3 * np.ones(4)
    assert np.allclose(nxt.x_curr, expect, atol=1e-14)
    z = np.linalg.solve(s.A[:4], s.b[:4])
    fixed = momentum_step(SolverState.start(z, np.random.default_rng(1)), s, d, 1.0, 0.4)
    assert np.allclose(fixed.x_curr, z, atol=1e-12)


def test_stochastic_momentum_needs_identity_geometry():
    s = gaussian(5, 3, 0, B=SpdMatrix.diagonal([1.0, 2.0, 3.0]))
    with pytest.raises(UnsupportedGeometryError):
        stochastic_momentum_step(SolverState.start(np.zeros(3)), s, Coordinate.uniform(5), 1.0, 0.1,
                                 np.random.default_rng(0))


def test_stochastic_momentum_term_is_unbiased():
    n, beta = 6, 0.07
    rng = np.random.default_rng(1)
    x, xp = rng.standard_normal(n), rng.standard_normal(n)
    gamma = n * beta
    avg = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = gamma * (x[i] - xp[i])
        avg += e / n
    assert np.allclose(avg, beta * (x - xp))


def test_momentum_rate_beta_zero():
    r = momentum_rate(Spectrum.from_eigenvalues([1.0, 0.3]), 1.0, 0.0)
    assert r.a2 == 0 and r.q == pytest.approx(0.7) and r.a1 == pytest.approx(0.7)
    assert r.delta == pytest.approx(0.0)


def test_momentum_rate_worked_example():
    r = momentum_rate(Spectrum.from_eigenvalues([1.0]), 1.0, 0.1)
    assert r.a1 == pytest.approx(0.22) and r.a2 == pytest.approx(0.22)
    assert r.q == pytest.approx((0.22 + math.sqrt(0.0484 + 0.88)) / 2)
    # F_{k+1} = a1 F_k + a2 F_{k-1} with F_0 = F_1 = 1 gives F_{k+1} <= q^k (1 + delta) F_0
    F = [1.0, 1.0]
    for _ in range(60):
        F.append(r.a1 * F[-1] + r.a2 * F[-2])
    assert all(F[k + 1] <= r.bound(k) * (1 + 1e-12) for k in range(len(F) - 1))


def test_bound_edge_admissible_and_error_carries_bound():
    sp = Spectrum.from_eigenvalues([0.9, 0.05])
    for omega in (0.5, 1.0, 1.5):
        b = admissible_beta_bound(0.05, 0.9, omega)
        r = momentum_rate(sp, omega, b - 1e-6)
        assert r.a1 + r.a2 < 1 and r.a1 + r.a2 <= r.q < 1
        with pytest.raises(RateUndefinedError) as info:
            momentum_rate(sp, omega, b + 1e-6)
        assert info.value.beta_bound == pytest.approx(b)


@settings(max_examples=1000, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(0.0, 1.0), st.floats(0.05, 1.95), st.floats(0.0, 1.0))
def test_rate_ordering(lmin, spread, omega, frac):
    lmax = lmin + spread * (1 - lmin)
    sp = Spectrum.from_eigenvalues([lmax, lmin])
    beta = frac * admissible_beta_bound(lmin, lmax, omega) * 0.999
    q0 = momentum_rate(sp, omega, 0.0).q
    q = momentum_rate(sp, omega, beta).q
    assert q >= q0 - 1e-12
    n = 10
    beta = min(beta, 0.999 * admissible_beta_bound(lmin, lmax, omega, n_factor=n) / n)
    q = momentum_rate(sp, omega, beta).q
    qbar = stochastic_momentum_rate(sp, omega, n * beta, n).q
    assert qbar >= q - 1e-12


def test_stochastic_gamma_bound():
    lmin, lmax, n = 0.02, 0.5, 20
    g = admissible_beta_bound(lmin, lmax, 1.0, n_factor=n)
    sp = Spectrum.from_eigenvalues([lmax, lmin])
    stochastic_momentum_rate(sp, 1.0, g - 1e-6, n)
    with pytest.raises(RateUndefinedError):
        stochastic_momentum_rate(sp, 1.0, g + 1e-6, n)


def test_complexity_ratio_values():
    assert smc_vs_mc_complexity(100, 100, 1e-3).ratio == 2
    assert smc_vs_mc_complexity(100, 10, 1e-3).ratio == 11
    sp = Spectrum.from_eigenvalues([0.5, 0.01])
    c = smc_vs_mc_complexity(100, 10, 1e-9, sp)
    assert c.model_ratio == pytest.approx(11.0, rel=1e-5)
    with pytest.raises(InvalidParameterError):
        smc_vs_mc_complexity(10, 0, 0.1)


def test_operation_counts():
    assert operation_count(5, 100, "basic") == 20
    assert operation_count(5, 100, "momentum") == 320
    assert operation_count(5, 100, "stochastic-momentum") == 21


def test_projection_invariance_under_momentum():
    s = gaussian(7, 6, 12, rank=3)
    x0 = np.random.default_rng(0).standard_normal(6)
    p0 = s.project(x0)
    tr = run(s, Coordinate.uniform(7), SolverConfig("momentum", beta=0.4), x0=x0, stopping=Stopping(300),
             hooks={"p": lambda x, k: float(np.linalg.norm(s.project(x) - p0))})
    assert tr.series("p")[1].max() <= 1e-9


def test_cesaro_average_examples():
    assert np.allclose(cesaro_average([[2.0, 3.0]] * 4), [2.0, 3.0])
    assert np.allclose(cesaro_average([[0.0, 2.0], [2.0, 4.0]]), [1.0, 3.0])
    with pytest.raises(InvalidParameterError):
        cesaro_bound(1.5, 0.3, 1.0, 1.0)


def test_cesaro_bound_monte_carlo():
    s = gaussian(20, 8, 5)
    d = Coordinate.uniform(20)
    omega, beta, trials, K = 1.0, 0.2, 200, 300
    EZ = expected_Z(s, d)
    xs = s.project(np.zeros(8))
    f = lambda x: 0.5 * (x - xs) @ EZ @ (x - xs)
    bound = cesaro_bound(omega, beta, xs @ xs, f(np.zeros(8)))
    sums = np.zeros(K)
    for t in range(trials):
        st0 = SolverState.start(np.zeros(8), np.random.default_rng(t))
        acc = np.zeros(8)
        for k in range(1, K + 1):
            st0 = momentum_step(st0, s, d, omega, beta)
            acc += st0.x_curr
            sums[k - 1] += f(acc / k)
    kf = np.arange(1, K + 1) * sums / trials
    assert np.all(kf <= bound)


def test_option_one_gamma_root_and_lambda_zero():
    m, lam, g_prev = 10, 0.3, 0.2
    g = option_one_gamma(g_prev, m, lam)
    assert g * g - g / m == pytest.approx((1 - g * lam / m) * g_prev ** 2)
    # larger root
    other = (-(lam * g_prev ** 2 - 1) / m - math.sqrt(((lam * g_prev ** 2 - 1) / m) ** 2 + 4 * g_prev ** 2)) / 2
    assert g > other
    # lambda = 0: gamma_k^2 = gamma_k/m + gamma_{k-1}^2, beta_k = 1
    sp = Spectrum.from_eigenvalues([1.0, 0.1])
    p = acc_params(1, m, 0.0, sp)
    gp = 0.0
    for _ in range(5):
        a, b, g = p.at(gp)
        assert b == 1.0 and g * g == pytest.approx(g / m + gp * gp)
        gp = g


def test_option_two_formulas_and_ranges():
    sp = Spectrum.from_eigenvalues([0.5, 0.01])
    p = acc_params(2, 20, 20.0, sp)
    assert p.beta == pytest.approx(1 - math.sqrt(0.01 / 20))
    assert p.gamma == pytest.approx(math.sqrt(1 / (0.01 * 20)))
    assert p.alpha == pytest.approx(1 / (1 + p.gamma * 20)) and 0 < p.alpha < 1
    with pytest.raises(InvalidParameterError):
        acc_params(2, 20, 0.5, sp)
    with pytest.raises(InvalidParameterError):
        acc_params(2, 20, 21.0, sp)
    with pytest.raises(InvalidParameterError):
        acc_params(1, 20, 0.3, sp)


def test_nu_matches_generalized_eigen_oracle():
    A = np.random.default_rng(6).standard_normal((6, 4))
    A /= np.linalg.norm(A, axis=1)[:, None]
    s = LinearSystem(A, A @ np.ones(4))
    m = 6
    G = A.T @ A
    Gp = np.linalg.pinv(G)
    N = sum(float(a @ Gp @ a) * np.outer(a, a) for a in A)
    U = scipy.linalg.orth(A.T)
    vals = scipy.linalg.eigh(U.T @ N @ U, U.T @ G @ U / m, eigvals_only=True)
    nu = nu_exact(s)
    assert nu == pytest.approx(vals.max(), rel=1e-9)
    lw = acc_spectrum(s).lambda_min_plus
    assert 1 - 1e-9 <= nu <= min(m, 1 / lw) + 1e-9


def test_acc_requires_identity_geometry():
    s = gaussian(5, 3, 0, B=SpdMatrix.diagonal([1.0, 2.0, 3.0]))
    with pytest.raises(UnsupportedGeometryError):
        acc_params_for(s, SolverConfig("accelerated"))


def test_acc_converges_faster_than_rk():
    s = gaussian(40, 30, 3).normalized()
    d = Coordinate.uniform(40)
    rk = run(s, d, stopping=Stopping(3000), record_every=3000).series("rel_error")[1][-1]
    acc = run(s, d, SolverConfig("accelerated"), stopping=Stopping(3000),
              record_every=3000).series("rel_error")[1][-1]
    assert acc < rk


def test_acc_option_two_lyapunov_components_decay():
    s = gaussian(12, 6, 8).normalized()
    m = s.m
    spec = acc_spectrum(s)
    nu = nu_exact(s)
    p = acc_params(2, m, nu, spec)
    rate = 1 - math.sqrt(spec.lambda_min_plus / nu)
    W = s.A.T @ s.A / m
    Wp = pseudoinverse(W)
    xs = s.project(np.zeros(6))
    trials, K = 200, 600
    ex, ev = np.zeros(K + 1), np.zeros(K + 1)
    for t in range(trials):
        st0 = AccState.start(np.zeros(6), np.random.default_rng(t))
        for k in range(K + 1):
            if k:
                st0 = acc_step(st0, s, p)
            ex[k] += (st0.x - xs) @ (st0.x - xs)
            dv = st0.v - xs
            ev[k] += dv @ Wp @ dv
    ks = np.arange(K + 1)
    assert fit_decay(ks, ex / trials, K // 4) <= rate + 0.02
    assert fit_decay(ks, ev / trials, K // 4) <= rate + 0.02


def test_batch_heavy_ball_matches_step_function():
    s = gaussian(15, 5, 2)
    d = Coordinate.uniform(15)
    tb = run_batch(s, d, None, 1, 50, seed=0, beta=0.3)
    tr = run(s, d, SolverConfig("momentum", beta=0.3), stopping=Stopping(50))
    assert np.allclose(tb.series("rel_error")[1], tr.series("rel_error")[1], rtol=1e-9, atol=1e-15)


def test_batch_stochastic_momentum_matches_run_per_trial():
    s = gaussian(30, 10, 1)
    d = Coordinate.uniform(30)
    cfg = SolverConfig("stochastic-momentum", gamma=0.5)
    tb = run_batch(s, d, None, 3, 200, seed=4, gamma=0.5)
    for t in range(3):
        tr = run(s, d, cfg, stopping=Stopping(200), seed=4, trial=t)
        assert np.allclose(tb.series("rel_error", t)[1], tr.series("rel_error")[1], rtol=1e-9, atol=1e-15)


def test_batch_target_stops_each_trial_where_run_does():
    s = gaussian(30, 10, 1)
    d = Coordinate.uniform(30)
    cfg = SolverConfig("stochastic-momentum", gamma=0.5)
    tb = run_batch(s, d, None, 4, 10 ** 5, seed=4, gamma=0.5, target=1e-8, record_every=10 ** 5)
    for t in range(4):
        tr = run(s, d, cfg, stopping=Stopping(10 ** 5, 1e-8), seed=4, trial=t, record_every=10 ** 5)
        assert tb.series("rel_error", t)[0][-1] == tr.series("rel_error")[0][-1]


def test_batch_stochastic_momentum_needs_identity_geometry():
    A = np.random.default_rng(0).normal(size=(6, 3))
    s = LinearSystem(A, A @ np.ones(3), B=np.diag([1.0, 2.0, 3.0]))
    with pytest.raises(InvalidInputError, match="B = I"):
        run_batch(s, Coordinate.uniform(6), None, 2, 10, gamma=0.1)
