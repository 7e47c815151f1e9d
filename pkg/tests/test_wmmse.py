import math

import numpy as np
import pytest

import satmimo as sm
from satmimo import channel as ch
from satmimo import wmmse

from conftest import build_scenario


def manual_scenario(s_n, k_n, beta, kappa, noise, budget, seed=0, m=(2, 2), n=(2, 1)):
    """Hand-built scenario with prescribed scalar statistics (no geometry)."""
    arr = sm.ArrayConfig(m_x=m[0], m_y=m[1], n_x=n[0], n_y=n[1])
    rng = np.random.default_rng(seed)
    shape = (s_n, k_n)
    phi_sat = rng.uniform(-np.pi, np.pi, shape)
    theta_sat = rng.uniform(0.2, np.pi - 0.2, shape)
    phi_ut = rng.uniform(-np.pi, np.pi, shape)
    theta_ut = rng.uniform(0.2, np.pi - 0.2, shape)
    beta = np.broadcast_to(np.asarray(beta, float), shape).copy()
    kappa = np.broadcast_to(np.asarray(kappa, float), shape).copy()
    g = np.empty(shape + (arr.m,), dtype=complex)
    d0 = np.empty(shape + (arr.n,), dtype=complex)
    sigma = np.empty(shape + (arr.n, arr.n), dtype=complex)
    r_ut = np.empty_like(sigma)
    for s in range(s_n):
        for k in range(k_n):
            g[s, k] = ch.tx_steering(arr, phi_sat[s, k], theta_sat[s, k])
            d0[s, k] = ch.rx_steering(arr, phi_ut[s, k], theta_ut[s, k])
            sigma[s, k] = ch.exp_corr_sigma(
                arr.n, rng.uniform(0.3, 0.9), rng.uniform(0, 2 * np.pi)
            )
            r_ut[s, k] = ch.rician_r_ut(beta[s, k], kappa[s, k], d0[s, k], sigma[s, k])
    return sm.ScenarioInstance(
        arr=arr,
        phi_sat=phi_sat,
        theta_sat=theta_sat,
        phi_ut=phi_ut,
        theta_ut=theta_ut,
        beta=beta,
        kappa=kappa,
        sigma_nlos=sigma,
        g=g,
        d0=d0,
        r_ut=r_ut,
        noise=np.full(k_n, float(noise)),
        budgets=np.full(s_n, float(budget)),
        weights=np.ones(shape),
    )


def random_pb(scn, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    p = scale * (
        rng.standard_normal((scn.num_sats, scn.num_uts, scn.m))
        + 1j * rng.standard_normal((scn.num_sats, scn.num_uts, scn.m))
    )
    b = rng.standard_normal((scn.num_sats, scn.num_uts, scn.n)) + 1j * rng.standard_normal(
        (scn.num_sats, scn.num_uts, scn.n)
    )
    return p, b


def test_interference_cov_matches_double_loop(small_scn):
    scn = small_scn
    p, _ = random_pb(scn, seed=3)
    for s in range(scn.num_sats):
        for k in range(scn.num_uts):
            cov = wmmse.interference_cov(scn, p, s, k)
            expect = scn.noise[k] * np.eye(scn.n, dtype=complex)
            for t in range(scn.num_sats):
                if t == s:
                    continue
                for m in range(scn.num_uts):
                    gain = abs(np.vdot(scn.g[t, k], p[t, m])) ** 2
                    expect = expect + gain * scn.r_ut[t, k]
            np.testing.assert_allclose(cov, expect, rtol=1e-12)


def test_signal_moments_against_independent_sampler():
    # Monte-Carlo oracle with its own receive-vector sampler.
    scn = manual_scenario(2, 2, beta=1.3, kappa=4.0, noise=0.7, budget=3.0, seed=9)
    p, b = random_pb(scn, seed=5)
    s, k = 0, 1
    mom = wmmse.signal_moments(scn, p, b, s, k)

    rng = np.random.default_rng(2024)
    draws = 200_000
    quad_mc = np.empty(scn.num_sats)
    mean_bd = 0.0j
    for t in range(scn.num_sats):
        chol = np.linalg.cholesky(scn.sigma_nlos[t, k])
        z = (rng.standard_normal((draws, scn.n)) + 1j * rng.standard_normal((draws, scn.n)))
        z /= math.sqrt(2.0)
        lo = math.sqrt(scn.kappa[t, k] * scn.beta[t, k] / (scn.kappa[t, k] + 1.0))
        d = lo * scn.d0[t, k] + math.sqrt(
            scn.beta[t, k] / (scn.kappa[t, k] + 1.0)
        ) * (z @ chol.T)
        proj = d @ b[s, k].conj()
        quad_mc[t] = float(np.mean(np.abs(proj) ** 2))
        if t == s:
            mean_bd = complex(np.mean(proj))

    own = np.abs([np.vdot(scn.g[s, k], p[s, m]) for m in range(scn.num_uts)]) ** 2
    xi_mc = mean_bd * np.vdot(scn.g[s, k], p[s, k])
    zeta_mc = own[k] * quad_mc[s]
    eta_mc = (own.sum() - own[k]) * quad_mc[s] + scn.noise[k] * float(
        np.sum(np.abs(b[s, k]) ** 2)
    )
    for t in range(scn.num_sats):
        if t == s:
            continue
        tot_t = sum(
            abs(np.vdot(scn.g[t, k], p[t, m])) ** 2 for m in range(scn.num_uts)
        )
        eta_mc += tot_t * quad_mc[t]

    assert mom.zeta == pytest.approx(zeta_mc, rel=0.02)
    assert mom.eta == pytest.approx(eta_mc, rel=0.02)
    assert abs(mom.xi - xi_mc) < 0.02 * abs(mom.xi)


def test_u_update_minimizes_mse(small_scn):
    p, b = random_pb(small_scn, seed=1)
    mom = wmmse.signal_moments(small_scn, p, b, 1, 0)
    u_star = wmmse.update_u(mom)
    e_star = wmmse.mse(mom, u_star)
    # Analytic optimum value.
    assert e_star == pytest.approx(
        1.0 - abs(mom.xi) ** 2 / (mom.zeta + mom.eta), rel=1e-12
    )
    rng = np.random.default_rng(0)
    for _ in range(200):
        trial = u_star + 0.3 * (rng.standard_normal() + 1j * rng.standard_normal())
        assert wmmse.mse(mom, trial) >= e_star - 1e-14


def test_w_update():
    assert wmmse.update_w(0.25) == pytest.approx(4.0)
    assert wmmse.update_w(0.5, a=2.0) == pytest.approx(4.0)
    with pytest.raises(sm.DegenerateLink):
        wmmse.update_w(0.0)


def test_b_update_normal_equations(small_scn):
    scn = small_scn
    p, b0 = random_pb(scn, seed=7)
    s, k = 0, 2
    u, w = 0.8 - 0.3j, 1.7
    b_new = wmmse.update_b(scn, p, s, k, u, w)

    # Unfactored system: |u|^2 M b = u * lo * (g^H p) * d0, with M assembled
    # from the raw double sum.
    mat = scn.noise[k] * np.eye(scn.n, dtype=complex)
    for t in range(scn.num_sats):
        for m in range(scn.num_uts):
            mat = mat + abs(np.vdot(scn.g[t, k], p[t, m])) ** 2 * scn.r_ut[t, k]
    lo = math.sqrt(scn.kappa[s, k] * scn.beta[s, k] / (scn.kappa[s, k] + 1.0))
    rhs = u * lo * np.vdot(scn.g[s, k], p[s, k]) * scn.d0[s, k]
    resid = abs(u) ** 2 * (mat @ b_new) - rhs
    assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(rhs)

    # And it really is a descent step on that link's weighted MSE.
    b_arr = b0.copy()
    e_old = wmmse.mse(wmmse.signal_moments(scn, p, b_arr, s, k), u)
    b_arr[s, k] = b_new
    e_new = wmmse.mse(wmmse.signal_moments(scn, p, b_arr, s, k), u)
    assert e_new <= e_old + 1e-12


def test_rho_coefficients_double_loop(small_scn):
    scn = small_scn
    _, b = random_pb(scn, seed=2)
    rng = np.random.default_rng(3)
    w = rng.uniform(0.5, 2.0, (scn.num_sats, scn.num_uts))
    u = rng.standard_normal((scn.num_sats, scn.num_uts)) + 1j * rng.standard_normal(
        (scn.num_sats, scn.num_uts)
    )
    rho = wmmse.rho_coefficients(scn, w, u, b)
    for s in range(scn.num_sats):
        for m in range(scn.num_uts):
            expect = 0.0
            for t in range(scn.num_sats):
                quad = np.real(b[t, m].conj() @ scn.r_ut[s, m] @ b[t, m])
                expect += w[t, m] * abs(u[t, m]) ** 2 * quad
            assert rho[s, m] == pytest.approx(expect, rel=1e-12)


def test_precoder_update_against_unsimplified_solve(small_scn):
    scn = small_scn
    _, b = random_pb(scn, seed=4)
    rng = np.random.default_rng(5)
    s_n, k_n = scn.num_sats, scn.num_uts
    w = rng.uniform(0.5, 2.0, (s_n, k_n))
    u = rng.standard_normal((s_n, k_n)) + 1j * rng.standard_normal((s_n, k_n))
    lam = rng.uniform(0.1, 1.0, s_n)
    rho = wmmse.rho_coefficients(scn, w, u, b)
    p = wmmse.precoders_from_tuple(scn, w, u, lam, rho, b)
    lo = np.sqrt(scn.kappa * scn.beta / (scn.kappa + 1.0))
    for s in range(s_n):
        q_mat = lam[s] * np.eye(scn.m, dtype=complex)
        for m in range(k_n):
            q_mat = q_mat + rho[s, m] * np.outer(scn.g[s, m], scn.g[s, m].conj())
        for k in range(k_n):
            rhs = (
                w[s, k]
                * np.conj(u[s, k])
                * lo[s, k]
                * np.vdot(scn.d0[s, k], b[s, k])
                * scn.g[s, k]
            )
            expect = np.linalg.solve(q_mat, rhs)
            np.testing.assert_allclose(p[s, k], expect, rtol=1e-10, atol=1e-14)
            np.testing.assert_allclose(
                wmmse.update_p(scn, w, u, b, s, k, lam[s]), expect, rtol=1e-10,
                atol=1e-14,
            )


def test_precoders_from_tuple_homogeneity(small_scn):
    # Scaling (w, lambda, rho) jointly leaves the precoders unchanged.
    scn = small_scn
    _, b = random_pb(scn, seed=8)
    rng = np.random.default_rng(9)
    s_n, k_n = scn.num_sats, scn.num_uts
    w = rng.uniform(0.5, 2.0, (s_n, k_n))
    u = rng.standard_normal((s_n, k_n)) + 1j * rng.standard_normal((s_n, k_n))
    lam = rng.uniform(0.1, 1.0, s_n)
    rho = wmmse.rho_coefficients(scn, w, u, b)
    base = wmmse.precoders_from_tuple(scn, w, u, lam, rho, b)
    c = 37.5
    scaled = wmmse.precoders_from_tuple(scn, c * w, u, c * lam, c * rho, b)
    np.testing.assert_allclose(scaled, base, rtol=1e-10)


def test_solve_lambda_inactive_when_budget_large(small_scn):
    # Fix the solver tuple, then widen the budget: the unconstrained
    # minimizer now fits and the multiplier must vanish.
    st = wmmse.wmmse_solve(small_scn, sm.WmmseOptions(max_outer=3))
    wide = small_scn.with_budgets(small_scn.budgets * 1e9)
    lam = wmmse.solve_lambda(wide, st.w, st.u, st.sol.b, 0)
    assert lam == 0.0


def test_solve_lambda_grid_oracle(small_scn):
    # Tight budget forces an active constraint; compare with a log-grid scan.
    scn = small_scn
    st = wmmse.wmmse_solve(scn, sm.WmmseOptions(max_outer=4))
    w, u, b = st.w, st.u, st.sol.b
    tight = scn.with_budgets(scn.budgets * 1e-3)
    rho = wmmse.rho_coefficients(tight, w, u, b)
    lo = np.sqrt(tight.kappa * tight.beta / (tight.kappa + 1.0))
    for s in range(tight.num_sats):
        lam_star = wmmse.solve_lambda(tight, w, u, b, s)
        assert lam_star > 0.0
        budget = tight.budgets[s]

        scal = (
            lo[s] * w[s] * np.conj(u[s]) * np.einsum("ka,ka->k", tight.d0[s].conj(), b[s])
        )
        base = np.zeros((tight.m, tight.m), dtype=complex)
        for m in range(tight.num_uts):
            base += rho[s, m] * np.outer(tight.g[s, m], tight.g[s, m].conj())

        def power(lam):
            sols = np.linalg.solve(base + lam * np.eye(tight.m), tight.g[s].T)
            return float(np.sum(np.abs(sols * scal) ** 2))

        # Landed on the feasible side, and essentially on the constraint.
        assert power(lam_star) <= budget * (1 + 1e-12)
        assert power(lam_star) >= budget * (1 - 1e-6)

        grid = np.geomspace(lam_star * 1e-3, lam_star * 1e3, 2000)
        errs = np.array([abs(power(x) - budget) for x in grid])
        lam_grid = grid[np.argmin(errs)]
        step = grid[1] / grid[0]
        assert lam_grid / step <= lam_star <= lam_grid * step


def test_wmmse_monotone_and_feasible(make_scn):
    for seed in range(4):
        scn = make_scn(s=2 + seed % 2, k=3, seed=seed, p_sat_w=2.0)
        st = wmmse.wmmse_solve(scn, sm.WmmseOptions(tol=1e-7, max_outer=60))
        obj = np.array(st.objective_trace)
        assert np.all(np.diff(obj) <= 1e-8)
        assert max(st.power_trace) <= 1.0 + 1e-12
        assert st.n_iter == len(obj)


def test_wmmse_converges_and_is_deterministic(small_scn):
    a = wmmse.wmmse_solve(small_scn, sm.WmmseOptions(tol=1e-6, max_outer=100))
    b = wmmse.wmmse_solve(small_scn, sm.WmmseOptions(tol=1e-6, max_outer=100))
    assert a.converged
    np.testing.assert_array_equal(a.sol.p, b.sol.p)
    np.testing.assert_array_equal(a.sol.b, b.sol.b)
    assert a.objective_trace == b.objective_trace


def test_single_link_capacity_analytic():
    beta, noise, budget = 2.0, 0.5, 4.0
    scn = manual_scenario(1, 1, beta=beta, kappa=1e9, noise=noise, budget=budget, seed=3)
    st = wmmse.wmmse_solve(scn, sm.WmmseOptions(tol=1e-9, max_outer=200))
    rate = wmmse.ergodic_rate(scn, st.sol, 0, 0, n_mc=2000, rng=np.random.default_rng(0))
    capacity = math.log2(1.0 + beta * budget / noise)
    assert rate == pytest.approx(capacity, rel=0.002)
    # Full budget, matched direction.
    assert st.sol.sat_powers()[0] == pytest.approx(budget, rel=1e-9)
    p_dir = st.sol.p[0, 0] / np.linalg.norm(st.sol.p[0, 0])
    assert abs(np.vdot(p_dir, scn.g[0, 0])) == pytest.approx(1.0, abs=1e-6)


def test_mrt_and_mmse_baselines(small_scn):
    scn = small_scn
    for kind in ("mrt", "mmse"):
        sol = wmmse.baseline_solution(scn, kind)
        np.testing.assert_allclose(sol.sat_powers(), scn.budgets, rtol=1e-12)
        np.testing.assert_array_equal(sol.b, scn.d0)
    with pytest.raises(ValueError):
        wmmse.baseline_solution(scn, "zf")


def test_mmse_collinear_with_mrt_single_user():
    scn = manual_scenario(2, 1, beta=1.0, kappa=5.0, noise=0.3, budget=2.0, seed=6)
    mrt = wmmse.baseline_solution(scn, "mrt").p
    mmse = wmmse.baseline_solution(scn, "mmse").p
    for s in range(2):
        cos = abs(np.vdot(mrt[s, 0], mmse[s, 0])) / (
            np.linalg.norm(mrt[s, 0]) * np.linalg.norm(mmse[s, 0])
        )
        assert cos == pytest.approx(1.0, abs=1e-10)


def test_sep_wmmse_matches_per_satellite_solves(small_scn):
    opts = sm.WmmseOptions(tol=1e-6, max_outer=50)
    sol = wmmse.sep_wmmse(small_scn, opts)
    assert np.all(sol.sat_powers() <= small_scn.budgets * (1 + 1e-6))
    sub = ch.subscenario(small_scn, [1])
    st = wmmse.wmmse_solve(sub, opts)
    np.testing.assert_array_equal(sol.p[1], st.sol.p[0])


def test_weighted_sum_rate_scales_with_weights(make_scn):
    scn1 = make_scn(s=2, k=2, seed=11)
    scn2 = make_scn(s=2, k=2, seed=11, weights=2.0 * np.ones((2, 2)))
    sol = wmmse.baseline_solution(scn1, "mrt")
    r1 = wmmse.weighted_sum_rate(scn1, sol, n_mc=200, rng=np.random.default_rng(1))
    r2 = wmmse.weighted_sum_rate(scn2, sol, n_mc=200, rng=np.random.default_rng(1))
    assert r2 == pytest.approx(2.0 * r1, rel=1e-12)


def test_ergodic_rate_zero_precoder(small_scn):
    sol = wmmse.baseline_solution(small_scn, "mrt")
    sol.p[...] = 0.0
    assert wmmse.ergodic_rate(small_scn, sol, 0, 0, n_mc=50) == 0.0
