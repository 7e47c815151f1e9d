import numpy as np
import pytest

import satmimo as sm

# Small fast arrays for unit tests: M = 4 (2x2), N = 2 (2x1).
FAST_ARR = sm.ArrayConfig(m_x=2, m_y=2, n_x=2, n_y=1)


def build_scenario(s=2, k=3, seed=0, p_sat_w=1.0, arr=FAST_ARR, cfg=None, weights=None):
    """One synthesized drop with reproducible seeding."""
    cfg = cfg or sm.ConstellationConfig()
    rng = np.random.default_rng(seed)
    geom = sm.drop_scenario(cfg, sm.DropConfig(num_sats=s, num_uts=k, seed=rng))
    return sm.synthesize_stats(geom, cfg, arr, rng, p_sat_w=p_sat_w, weights=weights)


@pytest.fixture
def make_scn():
    return build_scenario


@pytest.fixture
def small_scn():
    return build_scenario(s=2, k=3, seed=1)
