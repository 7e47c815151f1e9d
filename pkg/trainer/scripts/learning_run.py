"""Desk-scale learning experiment: trains both architectures and scores them
against the reference solver schemes on the held-out test split.

Usage: python3 scripts/learning_run.py [workdir]
"""
from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np
import satmimo

import sattrain as st

WORK = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/learning")
DATA = WORK / "data"
SEED = 123
EVAL_N_MC = 1000

cfg = st.TrainConfig(
    sats=3,
    uts=8,
    tx_grid=(4, 4),
    rx_grid=(2, 1),
    power_levels_dbw=(5.0,),
    split_sizes=(2000, 300, 100),
    seed=SEED,
)


def main() -> None:
    t_all = time.monotonic()
    WORK.mkdir(parents=True, exist_ok=True)
    if not (DATA / "manifest.txt").exists():
        t0 = time.monotonic()
        st.build_dataset(cfg, DATA)
        print(f"dataset built in {time.monotonic() - t0:.1f}s", flush=True)
    else:
        print("dataset already present", flush=True)

    containers = {}
    for arch in (st.ARCH_CEN, st.ARCH_DEC):
        out = WORK / f"{arch}.eqwt"
        t0 = time.monotonic()
        result = st.train(
            st.TrainConfig(**{**cfg.__dict__, "arch": arch}),
            DATA,
            out,
            log=lambda m: print(f"[{arch[:3]}] {m}", flush=True),
        )
        print(
            f"[{arch[:3]}] trained in {time.monotonic() - t0:.1f}s "
            f"({result.epochs_run} epochs, best {result.best_epoch})",
            flush=True,
        )
        containers[arch] = out

    cen_w = satmimo.load_weights(containers[st.ARCH_CEN])
    dec_w = satmimo.load_weights(containers[st.ARCH_DEC])
    schemes = ("cen-opt-wm", "sep-opt-wm", "cen-tfc-wm", "dec-tfc-wm")
    sums = {s: [] for s in schemes}
    t0 = time.monotonic()
    test_files = sorted((DATA / "test").glob("scn_*.txt"))
    for i, path in enumerate(test_files):
        scn = satmimo.import_scenario(path)
        for scheme in schemes:
            sol = satmimo.scheme_solution(
                scn, scheme, cen_weights=cen_w, dec_weights=dec_w
            )
            wsr = satmimo.weighted_sum_rate(
                scn, sol, n_mc=EVAL_N_MC, rng=np.random.default_rng(777000 + i)
            )
            sums[scheme].append(wsr)
    print(f"evaluation in {time.monotonic() - t0:.1f}s", flush=True)

    means = {s: float(np.mean(v)) for s, v in sums.items()}
    for s in schemes:
        print(f"{s:12s} mean WSR {means[s]:.4f} bit/s/Hz")
    cen_opt = means["cen-opt-wm"]
    print(f"cen-tfc / cen-opt = {means['cen-tfc-wm'] / cen_opt:.4f} (need >= 0.85)")
    print(f"cen-tfc / sep-opt = {means['cen-tfc-wm'] / means['sep-opt-wm']:.4f} (need >= 1.0)")
    print(f"dec-tfc / cen-opt = {means['dec-tfc-wm'] / cen_opt:.4f} (need >= 0.80)")
    print(f"total wall time {time.monotonic() - t_all:.1f}s")


if __name__ == "__main__":
    main()
