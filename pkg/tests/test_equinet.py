import math

import numpy as np
import pytest
from scipy.special import erf

import satmimo as sm
from satmimo import equinet as eq

from conftest import build_scenario


# Compact nets sized for the unit-test array (M = 4, N = 2).
CEN_DIMS = eq.default_cen_dims(4, 2, hidden=24, fused=16, depth=2)
DEC_DIMS = eq.default_dec_dims(4, 2, 16, 16, 12, 12, depth=2, heads=2)


@pytest.fixture(scope="module")
def cen_w():
    return eq.random_weights(eq.ARCH_CENTRALIZED, CEN_DIMS, seed=0)


@pytest.fixture(scope="module")
def dec_w():
    return eq.random_weights(eq.ARCH_DECENTRALIZED, DEC_DIMS, seed=0)


def test_pool_patterns_grid():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4, 5))
    pools = eq._pool_patterns(x)
    assert len(pools) == 4
    np.testing.assert_array_equal(pools[0], x)
    np.testing.assert_allclose(
        np.broadcast_to(pools[1], x.shape),
        np.broadcast_to(x.mean(axis=0, keepdims=True), x.shape),
    )
    np.testing.assert_allclose(
        np.broadcast_to(pools[2], x.shape),
        np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape),
    )
    np.testing.assert_allclose(
        np.broadcast_to(pools[3], x.shape),
        np.broadcast_to(x.mean(axis=(0, 1), keepdims=True), x.shape),
    )
    assert len(eq._pool_patterns(rng.standard_normal((4, 5)))) == 2


def test_mde_forward_matches_naive_loops():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 4, 5))
    pws = [
        (rng.standard_normal((5, 6)), rng.standard_normal(6)) for _ in range(4)
    ]
    out = eq.mde_forward(x, pws)
    expect = np.zeros((3, 4, 6))
    mean0 = x.mean(axis=0)
    mean1 = x.mean(axis=1)
    mean01 = x.mean(axis=(0, 1))
    for s in range(3):
        for k in range(4):
            expect[s, k] = (
                x[s, k] @ pws[0][0] + pws[0][1]
                + mean0[k] @ pws[1][0] + pws[1][1]
                + mean1[s] @ pws[2][0] + pws[2][1]
                + mean01 @ pws[3][0] + pws[3][1]
            )
    np.testing.assert_allclose(out, expect, rtol=1e-12)

    x1 = rng.standard_normal((4, 5))
    pws1 = pws[:2]
    out1 = eq.mde_forward(x1, pws1)
    expect1 = x1 @ pws1[0][0] + pws1[0][1] + x1.mean(axis=0) @ pws1[1][0] + pws1[1][1]
    np.testing.assert_allclose(out1, expect1, rtol=1e-12)

    with pytest.raises(sm.ShapeMismatch):
        eq.mde_forward(x, pws1)


def test_mde_is_permutation_equivariant():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 5, 3))
    pws = [(rng.standard_normal((3, 3)), rng.standard_normal(3)) for _ in range(4)]
    ps = rng.permutation(4)
    pk = rng.permutation(5)
    out = eq.mde_forward(x, pws)
    out_perm = eq.mde_forward(x[np.ix_(ps, pk)], pws)
    np.testing.assert_allclose(out_perm, out[np.ix_(ps, pk)], rtol=1e-10)


def test_ten_is_permutation_equivariant(cen_w):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 5, CEN_DIMS.d_in))
    ps, pk = rng.permutation(3), rng.permutation(5)
    out = eq.ten_forward(x, cen_w)
    out_perm = eq.ten_forward(x[np.ix_(ps, pk)], cen_w)
    np.testing.assert_allclose(out_perm, out[np.ix_(ps, pk)], rtol=1e-6, atol=1e-9)


def test_pma_matches_reference_attention(dec_w):
    rng = np.random.default_rng(4)
    r, k_n, f = 3, 4, DEC_DIMS.fused_oth
    x = rng.standard_normal((r, k_n, f))
    out = eq.pma_pool(x, dec_w)

    t = {name: dec_w.tensors[name].astype(np.float64) for name in dec_w.tensors}
    heads = DEC_DIMS.heads
    dh = f // heads
    q = (t["pma.seed"] @ t["pma.wq"] + t["pma.bq"]).reshape(heads, dh)
    expect = np.empty((k_n, f))
    for k in range(k_n):
        keys = (x[:, k] @ t["pma.wk"] + t["pma.bk"]).reshape(r, heads, dh)
        vals = (x[:, k] @ t["pma.wv"] + t["pma.bv"]).reshape(r, heads, dh)
        pooled = np.empty((heads, dh))
        for h in range(heads):
            logits = keys[:, h] @ q[h] / math.sqrt(dh)
            att = np.exp(logits - logits.max())
            att /= att.sum()
            pooled[h] = att @ vals[:, h]
        expect[k] = pooled.reshape(f) @ t["pma.wo"] + t["pma.bo"]
    np.testing.assert_allclose(out, expect, rtol=1e-10, atol=1e-12)


def test_pma_single_row_passthrough(dec_w):
    # With one row the softmax is 1 and the output is that row's value path.
    rng = np.random.default_rng(5)
    x = rng.standard_normal((1, 3, DEC_DIMS.fused_oth))
    t = {name: dec_w.tensors[name].astype(np.float64) for name in dec_w.tensors}
    expect = (x[0] @ t["pma.wv"] + t["pma.bv"]) @ t["pma.wo"] + t["pma.bo"]
    np.testing.assert_allclose(eq.pma_pool(x, dec_w), expect, rtol=1e-10, atol=1e-12)


def test_pma_is_row_permutation_invariant(dec_w):
    rng = np.random.default_rng(6)
    x = rng.standard_normal((5, 3, DEC_DIMS.fused_oth))
    out = eq.pma_pool(x, dec_w)
    out_perm = eq.pma_pool(x[rng.permutation(5)], dec_w)
    np.testing.assert_allclose(out_perm, out, rtol=1e-10, atol=1e-12)
    with pytest.raises(sm.ShapeMismatch):
        eq.pma_pool(x[0], dec_w)


def test_fda_layerwise_oracle(cen_w):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 4, CEN_DIMS.fused))
    t = {name: cen_w.tensors[name].astype(np.float64) for name in cen_w.tensors}
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    h = (x - mu) / np.sqrt(var + 1e-5) * t["fda.ln.g"] + t["fda.ln.b"]
    h = h @ t["fda.l1.w"] + t["fda.l1.b"]
    h = 0.5 * h * (1.0 + erf(h / math.sqrt(2.0)))
    expect = h @ t["fda.l2.w"] + t["fda.l2.b"]
    np.testing.assert_allclose(eq.fda_forward(x, cen_w), expect, rtol=1e-10, atol=1e-12)


def test_activation_values():
    assert eq.gelu(np.array(0.0)) == 0.0
    assert eq.gelu(np.array(1.0)) == pytest.approx(0.8413447460685429 * 1.0, rel=1e-12)
    assert eq.gelu(np.array(50.0)) == pytest.approx(50.0, rel=1e-15)
    assert abs(eq.gelu(np.array(-50.0))) < 1e-300
    assert eq.softplus(np.array(0.0)) == pytest.approx(math.log(2.0), rel=1e-15)
    assert eq.softplus(np.array(50.0)) == pytest.approx(50.0, rel=1e-15)
    assert eq.softplus(np.array(-50.0)) == pytest.approx(math.exp(-50.0), rel=1e-10)
    # x = [1, 3]: mean 2, variance 1, so the output is +- 1/sqrt(1 + eps).
    np.testing.assert_allclose(
        eq.layer_norm(np.array([1.0, 3.0]), np.ones(2), np.zeros(2)),
        [-0.9999950000374996, 0.9999950000374996],
        rtol=1e-12,
    )


def inv_softplus(y):
    return float(np.log(np.expm1(y)))


def test_cfr_decode_centralized_roundtrip():
    rng = np.random.default_rng(8)
    s_n, k_n, n = 2, 3, 2
    w_t = rng.uniform(0.5, 2.0, (s_n, k_n))
    u_t = rng.standard_normal((s_n, k_n)) + 1j * rng.standard_normal((s_n, k_n))
    rho_t = rng.standard_normal((s_n, k_n)) + 1j * rng.standard_normal((s_n, k_n))
    b_t = rng.standard_normal((s_n, k_n, n)) + 1j * rng.standard_normal((s_n, k_n, n))
    lam_raw = rng.standard_normal((s_n, k_n))

    c = np.empty((s_n, k_n, 6 + 2 * n))
    c[..., 0] = np.vectorize(inv_softplus)(w_t - 1e-6)
    c[..., 1], c[..., 2] = u_t.real, u_t.imag
    c[..., 3] = lam_raw
    c[..., 4], c[..., 5] = rho_t.real, rho_t.imag
    c[..., 6 : 6 + n] = b_t.real
    c[..., 6 + n :] = b_t.imag

    tup = eq.cfr_decode(c, n, "centralized")
    np.testing.assert_allclose(tup.w, w_t, rtol=1e-9)
    np.testing.assert_array_equal(tup.u, u_t)
    np.testing.assert_array_equal(tup.rho, rho_t)
    np.testing.assert_array_equal(tup.b, b_t)
    expect_lam = eq.softplus(lam_raw.mean(axis=1)) + 1e-8
    np.testing.assert_allclose(tup.lam, expect_lam, rtol=1e-12)

    dec = eq.cfr_decode(c[0], n, "decentralized")
    assert isinstance(dec.lam, float)
    np.testing.assert_array_equal(dec.u, u_t[0])

    with pytest.raises(sm.ShapeMismatch):
        eq.cfr_decode(c, n + 1, "centralized")
    with pytest.raises(sm.ShapeMismatch):
        eq.cfr_decode(c[0], n, "centralized")
    with pytest.raises(sm.ShapeMismatch):
        eq.cfr_decode(c, n, "decentralized")
    with pytest.raises(sm.ShapeMismatch):
        eq.cfr_decode(c, n, "sideways")


def test_random_weights_shapes_and_determinism(cen_w, dec_w):
    for w, arch, dims in ((cen_w, eq.ARCH_CENTRALIZED, CEN_DIMS),
                          (dec_w, eq.ARCH_DECENTRALIZED, DEC_DIMS)):
        shapes = eq.tensor_shapes(arch, dims)
        assert set(w.tensors) == set(shapes)
        for name, shape in shapes.items():
            assert w.tensors[name].shape == shape
            assert w.tensors[name].dtype == np.float32
    again = eq.random_weights(eq.ARCH_CENTRALIZED, CEN_DIMS, seed=0)
    for name in cen_w.tensors:
        np.testing.assert_array_equal(again.tensors[name], cen_w.tensors[name])
    other = eq.random_weights(eq.ARCH_CENTRALIZED, CEN_DIMS, seed=1)
    assert any(
        not np.array_equal(other.tensors[n], cen_w.tensors[n]) for n in cen_w.tensors
    )


def test_derive_array_dims(cen_w, dec_w):
    assert eq.derive_array_dims(cen_w.arch, cen_w.dims) == (4, 2)
    assert eq.derive_array_dims(dec_w.arch, dec_w.dims) == (4, 2)
    bad = eq.CenDims(d_in=47, hidden=8, fused=8, out=10, depth=1)
    with pytest.raises(sm.WeightFormatError):
        eq.derive_array_dims(eq.ARCH_CENTRALIZED, bad)


def test_container_roundtrip_bit_exact(tmp_path, cen_w, dec_w):
    for w, tag in ((cen_w, "cen"), (dec_w, "dec")):
        path = tmp_path / f"{tag}.eqwt"
        eq.save_weights(w, path)
        back = eq.load_weights(path)
        assert back.arch == w.arch
        assert back.dims == w.dims
        assert set(back.tensors) == set(w.tensors)
        for name in w.tensors:
            np.testing.assert_array_equal(back.tensors[name], w.tensors[name])
        info = eq.validate_weights(path)
        assert info["arch"] == w.arch
        assert (info["m"], info["n"]) == (4, 2)
        assert info["parameters"] == sum(t.size for t in w.tensors.values())
        assert (tmp_path / f"{tag}.eqwt.manifest.txt").exists()


def test_container_rejects_corruption(tmp_path, cen_w):
    path = tmp_path / "w.eqwt"
    eq.save_weights(cen_w, path)
    blob = path.read_bytes()

    bad = tmp_path / "bad.eqwt"
    bad.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(sm.WeightFormatError):
        eq.load_weights(bad)

    bad.write_bytes(blob[:4] + (99).to_bytes(4, "little") + blob[8:])
    with pytest.raises(sm.WeightFormatError):
        eq.load_weights(bad)

    bad.write_bytes(blob[: len(blob) - 7])
    with pytest.raises(sm.WeightFormatError):
        eq.load_weights(bad)

    # Manifest disagreement is caught by the validator.
    eq.save_weights(cen_w, bad)
    manifest = bad.with_name(bad.name + ".manifest.txt")
    manifest.write_text(manifest.read_text().replace("arch centralized", "arch dec"))
    with pytest.raises(sm.WeightFormatError):
        eq.validate_weights(bad)


def test_build_inputs_layout(small_scn):
    scn = small_scn
    feats = eq.build_inputs(scn)
    s_n, k_n, m, n = scn.num_sats, scn.num_uts, scn.m, scn.n
    assert feats.a.shape == (s_n, k_n, 6)
    assert feats.r.shape == (s_n, k_n, 2 * m * m + 2 * n * n)
    assert feats.u.shape == (s_n, k_n, 2 * m * m + 2 * n * n)
    np.testing.assert_array_equal(feats.a[..., 0], scn.phi_sat)
    np.testing.assert_array_equal(feats.a[..., 4], np.broadcast_to(scn.noise, (s_n, k_n)))
    np.testing.assert_array_equal(
        feats.a[..., 5], np.broadcast_to(scn.budgets[:, None], (s_n, k_n))
    )
    np.testing.assert_array_equal(feats.b[..., 0], scn.beta)
    np.testing.assert_array_equal(feats.b[..., 1], scn.kappa)
    # First r block is vec Re r_ut, row-major.
    s, k = 1, 2
    np.testing.assert_array_equal(
        feats.r[s, k, : n * n], scn.r_ut[s, k].real.ravel()
    )
    np.testing.assert_array_equal(
        feats.r[s, k, n * n : 2 * n * n], scn.r_ut[s, k].imag.ravel()
    )
    r_sat = scn.beta[s, k] * np.outer(scn.g[s, k], scn.g[s, k].conj())
    np.testing.assert_allclose(
        feats.r[s, k, 2 * n * n : 2 * n * n + m * m], r_sat.real.ravel(), rtol=1e-12
    )
    dd = np.outer(scn.d0[s, k], scn.d0[s, k].conj())
    np.testing.assert_allclose(feats.u[s, k, : n * n], dd.real.ravel(), rtol=1e-12)
    # Feature widths line up with the network contract.
    assert feats.x_cen().shape[-1] == eq.feature_width(m, n)
    assert feats.x_oth(0).shape == (s_n - 1, k_n, eq.other_feature_width(m, n))


def test_centralized_inference_is_permutation_equivariant(cen_w):
    scn = build_scenario(s=3, k=4, seed=10)
    tup = eq.infer_centralized(scn, cen_w)
    rng = np.random.default_rng(0)
    ps, pk = list(rng.permutation(3)), list(rng.permutation(4))
    scn_p = sm.permute_scenario(scn, ps, pk)
    tup_p = eq.infer_centralized(scn_p, cen_w)
    np.testing.assert_allclose(tup_p.w, tup.w[np.ix_(ps, pk)], rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(tup_p.u, tup.u[np.ix_(ps, pk)], rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(tup_p.lam, tup.lam[ps], rtol=1e-8)
    np.testing.assert_allclose(tup_p.b, tup.b[np.ix_(ps, pk)], rtol=1e-8, atol=1e-12)


def test_decentralized_inference_symmetries(dec_w):
    scn = build_scenario(s=3, k=4, seed=11)
    sl0 = eq.infer_decentralized(scn, dec_w, 0)
    # Swapping the two *other* satellites must not change satellite 0's slice.
    scn_sw = sm.permute_scenario(scn, [0, 2, 1], list(range(4)))
    sl0_sw = eq.infer_decentralized(scn_sw, dec_w, 0)
    np.testing.assert_allclose(sl0_sw.u, sl0.u, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(sl0_sw.b, sl0.b, rtol=1e-10, atol=1e-14)
    assert sl0_sw.lam == pytest.approx(sl0.lam, rel=1e-10)
    # Permuting terminals permutes the per-terminal outputs.
    pk = [2, 0, 3, 1]
    sl0_pk = eq.infer_decentralized(sm.permute_scenario(scn, [0, 1, 2], pk), dec_w, 0)
    np.testing.assert_allclose(sl0_pk.w, sl0.w[pk], rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(sl0_pk.b, sl0.b[pk], rtol=1e-8, atol=1e-12)
    # Whole-tuple assembly follows the satellite relabeling.
    tup = eq.assemble_decentralized(scn, dec_w)
    tup_sw = eq.assemble_decentralized(scn_sw, dec_w)
    np.testing.assert_allclose(tup_sw.u[0], tup.u[0], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(tup_sw.u[1], tup.u[2], rtol=1e-10, atol=1e-14)


def test_inference_error_paths(cen_w, dec_w):
    single = build_scenario(s=1, k=2, seed=12)
    with pytest.raises(sm.ShapeMismatch):
        eq.infer_decentralized(single, dec_w, 0)
    scn = build_scenario(s=2, k=2, seed=13)
    with pytest.raises(sm.ShapeMismatch):
        eq.infer_centralized(scn, dec_w)
    big_arr = sm.ArrayConfig(m_x=2, m_y=3, n_x=2, n_y=1)
    scn_big = build_scenario(s=2, k=2, seed=13, arr=big_arr)
    with pytest.raises(sm.ShapeMismatch):
        eq.infer_centralized(scn_big, cen_w)


def test_op_counts_depend_only_on_shapes(cen_w):
    scn_a = build_scenario(s=2, k=3, seed=14)
    scn_b = build_scenario(s=2, k=3, seed=15)
    with eq.count_ops() as ca:
        eq.infer_centralized(scn_a, cen_w)
    with eq.count_ops() as cb:
        eq.infer_centralized(scn_b, cen_w)
    assert ca.counts and ca.counts == cb.counts
    scn_c = build_scenario(s=2, k=4, seed=16)
    with eq.count_ops() as cc:
        eq.infer_centralized(scn_c, cen_w)
    assert cc.counts != ca.counts
