import math

import numpy as np
import pytest

import satmimo as sm
from satmimo import channel as ch

from conftest import FAST_ARR, build_scenario


def test_ula_steering_elementwise():
    n, x, sp = 5, 0.37, 0.5
    a = ch.ula_steering(n, x, sp)
    for i in range(n):
        expect = np.exp(-2j * np.pi * sp * x * i) / math.sqrt(n)
        assert a[i] == pytest.approx(expect, abs=1e-15)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)


def test_tx_steering_kron_layout():
    arr = sm.ArrayConfig(m_x=3, m_y=4)
    phi, theta = 0.4, 1.1
    g = ch.tx_steering(arr, phi, theta)
    ax = ch.ula_steering(3, math.sin(theta) * math.cos(phi), arr.spacing_wl)
    ay = ch.ula_steering(4, math.cos(theta), arr.spacing_wl)
    # Row-major element (ix, iy) sits at index ix * m_y + iy.
    for ix in range(3):
        for iy in range(4):
            assert g[ix * 4 + iy] == pytest.approx(ax[ix] * ay[iy], abs=1e-15)


def test_steering_unit_norm_many_angles():
    rng = np.random.default_rng(0)
    arr = sm.ArrayConfig(m_x=4, m_y=4, n_x=2, n_y=2)
    for _ in range(50):
        phi = rng.uniform(-np.pi, np.pi)
        theta = rng.uniform(0, np.pi)
        assert np.linalg.norm(ch.tx_steering(arr, phi, theta)) == pytest.approx(1.0)
        assert np.linalg.norm(ch.rx_steering(arr, phi, theta)) == pytest.approx(1.0)


def test_boresight_is_broadside():
    arr = sm.ArrayConfig(m_x=4, m_y=4)
    g = ch.tx_steering(arr, math.pi / 2, math.pi / 2)
    np.testing.assert_allclose(g, np.full(16, 0.25 + 0j), atol=1e-12)


def test_exp_corr_sigma_structure():
    sig = ch.exp_corr_sigma(3, 0.5, 0.0)
    expect = np.array([[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]]) / 3.0
    np.testing.assert_allclose(sig, expect, atol=1e-15)

    sig = ch.exp_corr_sigma(4, 0.8, 1.3)
    assert np.trace(sig).real == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sig, sig.conj().T, atol=1e-15)
    assert np.min(np.linalg.eigvalsh(sig)) >= -1e-12


def test_rician_r_ut_trace_and_psd(small_scn):
    scn = small_scn
    for s in range(scn.num_sats):
        for k in range(scn.num_uts):
            link = scn.link(s, k)
            tr = np.trace(link.r_ut).real
            assert tr == pytest.approx(link.beta, rel=1e-9)
            assert np.min(np.linalg.eigvalsh(link.r_ut)) >= -1e-12 * link.beta
            np.testing.assert_allclose(
                link.r_sat, link.beta * np.outer(link.g, link.g.conj()), rtol=1e-12
            )


def test_rician_r_ut_formula():
    rng = np.random.default_rng(4)
    d0 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    d0 /= np.linalg.norm(d0)
    sig = ch.exp_corr_sigma(3, 0.6, 0.2)
    out = ch.rician_r_ut(2.5, 4.0, d0, sig)
    expect = 2.5 * (4.0 / 5.0) * np.outer(d0, d0.conj()) + (2.5 / 5.0) * sig
    np.testing.assert_allclose(out, expect, atol=1e-15)


def test_synthesized_statistics(small_scn):
    scn = small_scn
    assert scn.m == FAST_ARR.m and scn.n == FAST_ARR.n
    assert np.all(scn.beta > 0) and np.all(scn.kappa > 0)
    assert np.all(scn.noise > 0) and np.all(scn.budgets > 0)
    # Steering fields match the stored angles.
    for s in range(scn.num_sats):
        for k in range(scn.num_uts):
            np.testing.assert_array_equal(
                scn.g[s, k],
                ch.tx_steering(scn.arr, scn.phi_sat[s, k], scn.theta_sat[s, k]),
            )
            np.testing.assert_array_equal(
                scn.d0[s, k],
                ch.rx_steering(scn.arr, scn.phi_ut[s, k], scn.theta_ut[s, k]),
            )
    # Angles and budgets are canonical under their storage units.
    assert np.all(scn.phi_sat == np.vectorize(sm.canonical_rad)(scn.phi_sat))
    assert np.all(scn.theta_ut == np.vectorize(sm.canonical_rad)(scn.theta_ut))
    assert np.all(scn.budgets == np.vectorize(sm.canonical_watt)(scn.budgets))


def test_sample_channel_rank_one(small_scn):
    link = small_scn.link(0, 0)
    h = ch.sample_channel(link, np.random.default_rng(0))
    assert h.shape == (small_scn.n, small_scn.m)
    assert np.linalg.matrix_rank(h) == 1


def test_sample_channel_second_moment(small_scn):
    # E{H H^H} -> r_ut because the transmit steering is unit norm.
    link = small_scn.link(1, 2)
    rng = np.random.default_rng(42)
    n = small_scn.n
    acc = np.zeros((n, n), dtype=complex)
    draws = 20000
    for _ in range(draws):
        h = ch.sample_channel(link, rng)
        acc += h @ h.conj().T
    acc /= draws
    err = np.linalg.norm(acc - link.r_ut) / np.linalg.norm(link.r_ut)
    assert err < 0.03


def test_sample_channel_mean(small_scn):
    link = small_scn.link(0, 1)
    rng = np.random.default_rng(11)
    draws = 20000
    acc = np.zeros((small_scn.n, small_scn.m), dtype=complex)
    for _ in range(draws):
        acc += ch.sample_channel(link, rng)
    acc /= draws
    lo = math.sqrt(link.kappa * link.beta / (link.kappa + 1.0))
    expect = lo * np.outer(link.d0, link.g.conj())
    assert np.linalg.norm(acc - expect) / np.linalg.norm(expect) < 0.02


def test_permute_scenario_moves_entries(small_scn):
    scn = small_scn
    ps, pk = [1, 0], [2, 0, 1]
    out = ch.permute_scenario(scn, ps, pk)
    for s in range(2):
        for k in range(3):
            np.testing.assert_array_equal(out.g[s, k], scn.g[ps[s], pk[k]])
            np.testing.assert_array_equal(out.r_ut[s, k], scn.r_ut[ps[s], pk[k]])
            assert out.beta[s, k] == scn.beta[ps[s], pk[k]]
    np.testing.assert_array_equal(out.noise, scn.noise[pk])
    np.testing.assert_array_equal(out.budgets, scn.budgets[ps])
    assert out.geometry is None


def test_permute_scenario_rejects_bad_perm(small_scn):
    with pytest.raises(sm.ShapeMismatch):
        ch.permute_scenario(small_scn, [0, 0], [0, 1, 2])
    with pytest.raises(sm.ShapeMismatch):
        ch.permute_scenario(small_scn, [1, 0], [0, 1])


def test_subscenario_slices(small_scn):
    sub = ch.subscenario(small_scn, [1])
    assert sub.num_sats == 1 and sub.num_uts == small_scn.num_uts
    np.testing.assert_array_equal(sub.g[0], small_scn.g[1])
    np.testing.assert_array_equal(sub.budgets, small_scn.budgets[1:2])
    np.testing.assert_array_equal(sub.noise, small_scn.noise)


def test_with_budgets(small_scn):
    out = small_scn.with_budgets(2.5)
    np.testing.assert_array_equal(out.budgets, [2.5, 2.5])
    np.testing.assert_array_equal(out.g, small_scn.g)
    # The original is untouched.
    assert not np.array_equal(small_scn.budgets, out.budgets)


def test_synthesis_determinism():
    a = build_scenario(s=2, k=2, seed=5)
    b = build_scenario(s=2, k=2, seed=5)
    np.testing.assert_array_equal(a.r_ut, b.r_ut)
    np.testing.assert_array_equal(a.kappa, b.kappa)
