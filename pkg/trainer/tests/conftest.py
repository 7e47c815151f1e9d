"""Shared fixtures.

The suite checks sattrain against the installed reference implementation
(satmimo): scenario files, weight containers, forward passes, and rates
must line up across the package boundary.  sattrain itself never imports
the reference; only these tests do.
"""
from __future__ import annotations

import numpy as np
import pytest
import torch

import sattrain as st

TINY = dict(sats=3, uts=4, tx_grid=(2, 2), rx_grid=(2, 1))


@pytest.fixture(scope="session")
def tiny_cfg() -> st.TrainConfig:
    return st.TrainConfig(
        **TINY,
        power_levels_dbw=(0.0, 5.0),
        split_sizes=(10, 4, 4),
        seed=901,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_cfg, tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_data")
    st.build_dataset(tiny_cfg, root)
    return root


@pytest.fixture(scope="session")
def tiny_scenarios(tiny_dataset):
    return st.load_split(tiny_dataset, "train")


@pytest.fixture(scope="session")
def tiny_stats(tiny_scenarios):
    return st.compute_stats(tiny_scenarios)


@pytest.fixture(scope="session")
def tiny_batch(tiny_scenarios, tiny_stats):
    return st.assemble_batch(tiny_scenarios, tiny_stats, torch.float64)


def permuted_scenario(scn: st.Scenario, sat_perm, ut_perm) -> st.Scenario:
    """Relabel satellites/terminals of a scenario (for equivariance checks)."""
    sp = np.asarray(sat_perm)
    up = np.asarray(ut_perm)

    def lk(arr):
        return np.asarray(arr)[sp][:, up]

    return st.Scenario(
        grid=scn.grid,
        phi_sat=lk(scn.phi_sat),
        theta_sat=lk(scn.theta_sat),
        phi_ut=lk(scn.phi_ut),
        theta_ut=lk(scn.theta_ut),
        beta=lk(scn.beta),
        kappa=lk(scn.kappa),
        sigma_nlos=lk(scn.sigma_nlos),
        g=lk(scn.g),
        d0=lk(scn.d0),
        r_ut=lk(scn.r_ut),
        noise=np.asarray(scn.noise)[up],
        budgets=np.asarray(scn.budgets)[sp],
        weights=lk(scn.weights),
        power_dbw=scn.power_dbw,
    )
