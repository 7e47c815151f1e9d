"""Learning quality at desk scale (S=3, K=8, M=16, N=2, 2000 train samples).

Trains both architectures with the default hyperparameters, then scores the
held-out test split with the reference evaluator (n_mc=1000, common random
numbers across schemes per scenario).  Bars:

  mean(cen-tfc) >= 0.85 * mean(cen-opt)   and   mean(cen-tfc) >= mean(sep-opt)
  mean(dec-tfc) >= 0.80 * mean(cen-opt)
  total wall time < 2 h

A reference full run on this machine: ratios 0.9919 / 1.0227 / 0.9764 in
about 13 minutes (cen stops at epoch 126, dec at 157).
"""
from __future__ import annotations

import time

import numpy as np
import pytest
import satmimo

import sattrain as st

SEED = 123
EVAL_N_MC = 1000
SCHEMES = ("cen-opt-wm", "sep-opt-wm", "cen-tfc-wm", "dec-tfc-wm")

CFG = st.TrainConfig(
    sats=3,
    uts=8,
    tx_grid=(4, 4),
    rx_grid=(2, 1),
    power_levels_dbw=(5.0,),
    split_sizes=(2000, 300, 100),
    seed=SEED,
)


@pytest.fixture(scope="module")
def learning_results(tmp_path_factory):
    started = time.monotonic()
    work = tmp_path_factory.mktemp("learning")
    data = work / "data"
    st.build_dataset(CFG, data)

    containers = {}
    for arch in (st.ARCH_CEN, st.ARCH_DEC):
        out = work / f"{arch}.eqwt"
        st.train(st.TrainConfig(**{**CFG.__dict__, "arch": arch}), data, out)
        containers[arch] = out

    cen_w = satmimo.load_weights(containers[st.ARCH_CEN])
    dec_w = satmimo.load_weights(containers[st.ARCH_DEC])
    sums = {s: [] for s in SCHEMES}
    for i, path in enumerate(sorted((data / "test").glob("scn_*.txt"))):
        scn = satmimo.import_scenario(path)
        for scheme in SCHEMES:
            sol = satmimo.scheme_solution(
                scn, scheme, cen_weights=cen_w, dec_weights=dec_w
            )
            # same rng seed per scenario -> common random numbers across schemes
            wsr = satmimo.weighted_sum_rate(
                scn, sol, n_mc=EVAL_N_MC, rng=np.random.default_rng(777000 + i)
            )
            sums[scheme].append(wsr)
    means = {s: float(np.mean(v)) for s, v in sums.items()}
    elapsed = time.monotonic() - started
    print(
        "\nlearning run: "
        + "  ".join(f"{s}={means[s]:.4f}" for s in SCHEMES)
        + f"  elapsed={elapsed:.0f}s"
    )
    return means, elapsed


def test_centralized_learning_quality(learning_results):
    means, _ = learning_results
    ratio_opt = means["cen-tfc-wm"] / means["cen-opt-wm"]
    ratio_sep = means["cen-tfc-wm"] / means["sep-opt-wm"]
    print(f"cen-tfc/cen-opt = {ratio_opt:.4f} (bar 0.85)")
    print(f"cen-tfc/sep-opt = {ratio_sep:.4f} (bar 1.00)")
    assert ratio_opt >= 0.85
    assert means["cen-tfc-wm"] >= means["sep-opt-wm"]


def test_decentralized_learning_quality(learning_results):
    means, _ = learning_results
    ratio = means["dec-tfc-wm"] / means["cen-opt-wm"]
    print(f"dec-tfc/cen-opt = {ratio:.4f} (bar 0.80)")
    assert ratio >= 0.80


def test_runtime_budget(learning_results):
    _, elapsed = learning_results
    assert elapsed < 7200.0
